use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use super::config::{ModelName, PipelineConfig};
use super::{CliError, Stage};
use crate::bssm::{
    diagnostics, fit_bssm, predict_one_step, wbic, BssmConfig, BssmError, DiagnosticsReport, MoveAcceptance,
    PosteriorSamples, Wbic,
};
use crate::burst::{annotate_bursts, BurstAnnotation, KleinbergConfig};
use crate::classic::{
    classical_forecast, detect_break, fit_ar, fit_arma, fit_es_alpha, fit_trend_break, select_arma, BreakSearch,
    ClassicalModel, ModelError, SmootherModel, TrendFit,
};
use crate::eval::{interval_coverage, render_table, stratified_accuracy, AccuracyReport, Stratum};
use crate::forecast::{write_forecasts_csv, ForecastSeries};
use crate::rng::fnv1a_bytes;
use crate::series::{correlogram, summarize, CorrelogramResult, CountSeries, SummaryStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Stats,
    Bursts,
    Forecast,
    Baselines,
    Evaluate,
    Pipeline,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Stats,
        Subcommand::Bursts,
        Subcommand::Forecast,
        Subcommand::Baselines,
        Subcommand::Evaluate,
        Subcommand::Pipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Stats => "stats",
            Subcommand::Bursts => "bursts",
            Subcommand::Forecast => "forecast",
            Subcommand::Baselines => "baselines",
            Subcommand::Evaluate => "evaluate",
            Subcommand::Pipeline => "pipeline",
        }
    }

    pub(crate) fn about(self) -> &'static str {
        match self {
            Subcommand::Stats => "summary statistics, dispersion and histogram data",
            Subcommand::Bursts => "Kleinberg burst levels per week",
            Subcommand::Forecast => "BSSM one-week-ahead forecasts and MCMC diagnostics",
            Subcommand::Baselines => "classical one-week-ahead forecasts and fitted models",
            Subcommand::Evaluate => "accuracy tables for all selected models, overall and by burst level",
            Subcommand::Pipeline => "every stage above plus plot data and a run manifest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: usize,
    pub fnv1a: String,
}

/// The files written by one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub stage: String,
    pub files: Vec<ArtifactFile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
}

fn bssm_err(stage: Stage, e: BssmError) -> CliError {
    if e.is_numerical() {
        CliError::numerical(stage, e.to_string())
    } else {
        CliError::validation(stage, e.to_string())
    }
}

fn model_err(stage: Stage, what: &str, e: ModelError) -> CliError {
    let message = format!("{what}: {e}");
    if e.is_numerical() {
        CliError::numerical(stage, message)
    } else {
        CliError::validation(stage, message)
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

/// Tidy plot data, one row per forecast week:
/// `week,actual,point,lower,upper,burst_level`.
pub fn emit_plot_data<W: Write>(
    forecast: &ForecastSeries,
    bursts: &BurstAnnotation,
    out: W,
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        week: usize,
        actual: u64,
        point: Option<f64>,
        lower: Option<f64>,
        upper: Option<f64>,
        burst_level: usize,
    }
    let io = |e: csv::Error| CliError::validation(Stage::Plot, format!("writing plot data: {e}"));
    let mut w = csv::Writer::from_writer(out);
    if forecast.rows.is_empty() {
        w.write_record(["week", "actual", "point", "lower", "upper", "burst_level"])
            .map_err(io)?;
    }
    for r in &forecast.rows {
        let level = r
            .week
            .checked_sub(1)
            .and_then(|i| bursts.week_levels.get(i))
            .copied()
            .ok_or_else(|| {
                CliError::validation(
                    Stage::Plot,
                    format!(
                        "forecast week {} has no burst level ({} weeks annotated)",
                        r.week,
                        bursts.week_levels.len()
                    ),
                )
            })?;
        w.serialize(Row {
            week: r.week,
            actual: r.actual,
            point: r.point,
            lower: r.lower,
            upper: r.upper,
            burst_level: level,
        })
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::validation(Stage::Plot, format!("writing plot data: {e}")))?;
    Ok(())
}

struct BssmRun {
    config: BssmConfig,
    samples: PosteriorSamples,
    forecast: ForecastSeries,
    diagnostics: DiagnosticsReport,
    wbic: Option<Wbic>,
}

struct Baselines {
    break_search: Option<BreakSearch>,
    trend: Option<TrendFit>,
    fitted: Vec<(ModelName, ClassicalModel, ForecastSeries)>,
    arma_selection: serde_json::Value,
}

struct Run<'a> {
    config: &'a PipelineConfig,
    series: CountSeries,
    bursts: Option<BurstAnnotation>,
    bssm: Option<BssmRun>,
    baselines: Option<Baselines>,
    artifacts: Vec<Artifact>,
    warnings: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(config: &'a PipelineConfig) -> Result<Self, CliError> {
        let series = CountSeries::load_csv(&config.input_path)
            .map_err(|e| CliError::validation(Stage::Load, e.to_string()))?;
        if series.is_empty() {
            return Err(CliError::validation(Stage::Load, "input has no weeks"));
        }
        Ok(Self {
            config,
            series,
            bursts: None,
            bssm: None,
            baselines: None,
            artifacts: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn write(&mut self, stage: Stage, files: Vec<(&str, Vec<u8>)>) -> Result<(), CliError> {
        let dir = &self.config.output_dir;
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::validation(stage, format!("cannot create {}: {e}", dir.display())))?;
        let mut entries = Vec::with_capacity(files.len());
        for (name, bytes) in files {
            let path = dir.join(name);
            std::fs::write(&path, &bytes)
                .map_err(|e| CliError::validation(stage, format!("cannot write {}: {e}", path.display())))?;
            entries.push(ArtifactFile {
                path: name.to_string(),
                bytes: bytes.len(),
                fnv1a: format!("{:016x}", fnv1a_bytes(&bytes)),
            });
        }
        self.artifacts.push(Artifact {
            stage: stage.as_str().to_string(),
            files: entries,
        });
        Ok(())
    }

    fn stats(&mut self) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Doc<'s> {
            series: &'s str,
            summary: SummaryStats,
            correlogram: Option<CorrelogramResult>,
            notes: Vec<String>,
        }
        let summary = summarize(&self.series).map_err(|e| CliError::validation(Stage::Stats, e.to_string()))?;
        let mut notes = Vec::new();
        let max_lag = self.config.max_lag.min(self.series.len() - 1);
        let correlogram = match correlogram(&self.series.as_f64(), max_lag) {
            Ok(c) => Some(c),
            Err(e) => {
                notes.push(format!("correlogram omitted: {e}"));
                None
            }
        };
        let mut hist = csv::Writer::from_writer(Vec::new());
        hist.write_record(["bin_lower", "bin_upper", "n_weeks"])
            .and_then(|_| {
                summary.histogram.iter().try_for_each(|b| {
                    hist.write_record([b.bin_lower.to_string(), b.bin_upper.to_string(), b.n_weeks.to_string()])
                })
            })
            .map_err(|e| CliError::validation(Stage::Stats, e.to_string()))?;
        let hist = hist.into_inner().expect("in-memory writer");
        let doc = Doc {
            series: &self.series.label,
            summary,
            correlogram,
            notes,
        };
        self.write(Stage::Stats, vec![("summary.json", json_bytes(&doc)), ("histogram.csv", hist)])
    }

    fn ensure_bursts(&mut self) -> Result<&BurstAnnotation, CliError> {
        if self.bursts.is_none() {
            let a = annotate_bursts(&self.series, &self.config.kleinberg)
                .map_err(|e| CliError::validation(Stage::Bursts, e.to_string()))?;
            self.bursts = Some(a);
        }
        Ok(self.bursts.as_ref().expect("just set"))
    }

    fn bursts(&mut self) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Doc {
            config: KleinbergConfig,
            max_level: usize,
            burst_weeks: usize,
            weeks_by_level: BTreeMap<usize, usize>,
            annotation: serde_json::Value,
        }
        let config = self.config.kleinberg;
        self.ensure_bursts()?;
        let a = self.bursts.as_ref().expect("just set");
        let weeks_by_level = (1..=a.max_level()).map(|l| (l, a.weeks_at_level(l))).collect();
        let doc = Doc {
            config,
            max_level: a.max_level(),
            burst_weeks: a.burst_weeks(),
            weeks_by_level,
            annotation: a.to_json(),
        };
        let mut csv = String::from("week,count,level\n");
        for (i, (&c, &l)) in self.series.counts().iter().zip(&a.week_levels).enumerate() {
            csv.push_str(&format!("{},{c},{l}\n", i + 1));
        }
        self.write(
            Stage::Bursts,
            vec![("bursts.json", json_bytes(&doc)), ("burst_levels.csv", csv.into_bytes())],
        )
    }

    fn ensure_bssm(&mut self, with_wbic: bool) -> Result<&BssmRun, CliError> {
        if self.bssm.is_none() {
            let config = self.config.bssm.clone();
            let samples = fit_bssm(&self.series, &config).map_err(|e| bssm_err(Stage::Forecast, e))?;
            let forecast = predict_one_step(&samples, &self.series, config.credible_level)
                .map_err(|e| bssm_err(Stage::Forecast, e))?;
            let diagnostics = diagnostics(&samples).map_err(|e| bssm_err(Stage::Forecast, e))?;
            for w in &samples.warnings {
                self.warnings.push(format!("forecast: {w}"));
            }
            for p in diagnostics.parameters.iter().filter(|p| !p.pass) {
                self.warnings.push(format!(
                    "forecast: convergence gate failed for {} (rhat {:?}, ess {:?})",
                    p.name, p.rhat, p.ess
                ));
            }
            self.bssm = Some(BssmRun {
                config,
                samples,
                forecast,
                diagnostics,
                wbic: None,
            });
        }
        let run = self.bssm.as_mut().expect("just set");
        if with_wbic && run.wbic.is_none() {
            run.wbic = Some(wbic(&self.series, &run.config).map_err(|e| bssm_err(Stage::Forecast, e))?);
        }
        Ok(self.bssm.as_ref().expect("just set"))
    }

    fn forecast(&mut self) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Summary {
            mean: f64,
            lower: f64,
            upper: f64,
        }
        #[derive(Serialize)]
        struct Doc<'r> {
            model: &'r str,
            config: &'r BssmConfig,
            draws: usize,
            diagnostics: &'r DiagnosticsReport,
            acceptance: &'r [MoveAcceptance],
            posterior: BTreeMap<&'static str, Summary>,
            wbic: Option<Wbic>,
            interval_coverage: Option<f64>,
            notes: Vec<&'static str>,
        }
        let with_wbic = self.config.wbic;
        let run = self.ensure_bssm(with_wbic)?;
        let s = &run.samples;
        let level = run.config.credible_level;
        let summary = |v: &[f64]| {
            let (lower, upper) = PosteriorSamples::interval_of(v, level);
            Summary {
                mean: PosteriorSamples::mean_of(v),
                lower,
                upper,
            }
        };
        let posterior = BTreeMap::from([
            ("alpha", summary(&s.alpha)),
            ("phi", summary(&s.phi)),
            ("sigma_w", summary(&s.sigma_w)),
            ("shape_r", summary(&s.shape_r)),
        ]);
        let doc = Doc {
            model: &run.forecast.model,
            config: &run.config,
            draws: s.n_draws(),
            diagnostics: &run.diagnostics,
            acceptance: &s.acceptance,
            posterior,
            wbic: run.wbic,
            interval_coverage: interval_coverage(&run.forecast).ok(),
            notes: vec![
                "forecasts come from a single fit to the full series; each week is predicted from the previous week's count",
            ],
        };
        let mut csv = Vec::new();
        write_forecasts_csv(std::slice::from_ref(&run.forecast), &mut csv)
            .map_err(|e| CliError::validation(Stage::Forecast, e.to_string()))?;
        let doc = json_bytes(&doc);
        self.write(
            Stage::Forecast,
            vec![("bssm_forecast.csv", csv), ("bssm_diagnostics.json", doc)],
        )
    }

    fn classical_models(&self) -> Vec<ModelName> {
        self.config
            .models
            .iter()
            .copied()
            .filter(|&m| m != ModelName::Bssm)
            .collect()
    }

    fn ensure_baselines(&mut self) -> Result<&Baselines, CliError> {
        if self.baselines.is_some() {
            return Ok(self.baselines.as_ref().expect("checked"));
        }
        let stage = Stage::Baselines;
        let n = self.series.len();
        let (break_search, trend) = if self.config.raw_counts {
            (None, None)
        } else {
            let (lo, hi) = self.config.break_search_range;
            let (lo, hi) = (lo.max(2), hi.min(n.saturating_sub(1)));
            if lo > hi {
                return Err(CliError::validation(
                    stage,
                    format!(
                        "break search range {}..={} has no candidates inside 2..={} for a {n}-week series",
                        self.config.break_search_range.0,
                        self.config.break_search_range.1,
                        n.saturating_sub(1)
                    ),
                ));
            }
            let search = detect_break(&self.series, lo..=hi).map_err(|e| model_err(stage, "break search", e))?;
            let trend = fit_trend_break(&self.series, search.break_point)
                .map_err(|e| model_err(stage, "trend fit", e))?;
            (Some(search), Some(trend))
        };
        let xs = match &trend {
            Some(t) => t.residuals.clone(),
            None => self.series.as_f64(),
        };
        let sm = self.config.smoothers;
        let smoother = |model: SmootherModel| -> Result<ClassicalModel, ModelError> {
            model.validate()?;
            Ok(ClassicalModel::Smoother { model, n_obs: n })
        };
        let mut fitted = Vec::new();
        for m in self.classical_models() {
            let model = match m {
                ModelName::Ar1 => fit_ar(&xs, 1).map(ClassicalModel::Ar),
                ModelName::Ar3 => fit_ar(&xs, 3).map(ClassicalModel::Ar),
                ModelName::Arma11 => fit_arma(&xs, 1, 1).map(ClassicalModel::Arma),
                ModelName::Ma => smoother(SmootherModel::MovingAverage { k: sm.ma_window }),
                ModelName::Wma => smoother(SmootherModel::WeightedMovingAverage { k: sm.wma_window }),
                ModelName::Es => match sm.es_alpha {
                    Some(alpha) => Ok(alpha),
                    None => fit_es_alpha(&xs),
                }
                .and_then(|alpha| smoother(SmootherModel::ExponentialSmoothing { alpha })),
                ModelName::Holtwinters => smoother(SmootherModel::HoltWinters {
                    alpha: sm.hw_alpha,
                    beta: sm.hw_beta,
                    gamma: sm.hw_gamma,
                    season: sm.hw_season,
                }),
                ModelName::Bssm => unreachable!("filtered out"),
            }
            .map_err(|e| model_err(stage, m.as_str(), e))?;
            let forecast =
                classical_forecast(&self.series, &model, trend.as_ref()).map_err(|e| model_err(stage, m.as_str(), e))?;
            fitted.push((m, model, forecast));
        }
        let (p_max, q_max) = self.config.arma_grid;
        let arma_selection = match select_arma(&xs, p_max, q_max) {
            Ok(sel) => json!({ "order": [sel.p, sel.q], "aic": sel.model.aic, "grid": sel.grid }),
            Err(e) => {
                self.warnings.push(format!("baselines: ARMA order selection failed: {e}"));
                json!({ "error": e.to_string() })
            }
        };
        self.baselines = Some(Baselines {
            break_search,
            trend,
            fitted,
            arma_selection,
        });
        Ok(self.baselines.as_ref().expect("just set"))
    }

    fn baselines(&mut self) -> Result<(), CliError> {
        let raw_counts = self.config.raw_counts;
        let b = self.ensure_baselines()?;
        let models: Vec<serde_json::Value> = b
            .fitted
            .iter()
            .map(|(name, model, _)| json!({ "name": name.as_str(), "label": model.label(), "model": model }))
            .collect();
        let doc = json!({
            "modelled_series": if raw_counts { "raw counts" } else { "trend and break residuals" },
            "break_search": b.break_search.as_ref().map(|s| json!({
                "break_point": s.break_point,
                "no_break_evidence": s.no_break_evidence,
                "rss_curve": s.rss_curve,
            })),
            "trend": b.trend,
            "models": models,
            "arma_selection": b.arma_selection,
        });
        let forecasts: Vec<ForecastSeries> = b.fitted.iter().map(|(_, _, f)| f.clone()).collect();
        let mut csv = Vec::new();
        write_forecasts_csv(&forecasts, &mut csv).map_err(|e| CliError::validation(Stage::Baselines, e.to_string()))?;
        self.write(
            Stage::Baselines,
            vec![("baseline_forecasts.csv", csv), ("baseline_models.json", json_bytes(&doc))],
        )
    }

    /// Forecasts of every selected model, in the configured order.
    fn all_forecasts(&mut self) -> Result<Vec<(ModelName, ForecastSeries)>, CliError> {
        if self.config.has_model(ModelName::Bssm) {
            self.ensure_bssm(false)?;
        }
        if !self.classical_models().is_empty() {
            self.ensure_baselines()?;
        }
        let mut out = Vec::new();
        for &m in &self.config.models {
            let f = if m == ModelName::Bssm {
                self.bssm.as_ref().map(|r| r.forecast.clone())
            } else {
                self.baselines
                    .as_ref()
                    .and_then(|b| b.fitted.iter().find(|(n, _, _)| *n == m))
                    .map(|(_, _, f)| f.clone())
            };
            out.push((m, f.expect("forecast computed above")));
        }
        Ok(out)
    }

    fn evaluate(&mut self) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct ModelDoc {
            name: &'static str,
            label: String,
            reports: Vec<AccuracyReport>,
            interval_coverage: Option<f64>,
            notes: Vec<String>,
        }
        let forecasts = self.all_forecasts()?;
        let bursts = self.ensure_bursts()?.clone();
        let stage = Stage::Evaluate;
        let mut docs = Vec::new();
        for (name, f) in &forecasts {
            let s = stratified_accuracy(&f.actuals(), &f.points(), &bursts)
                .map_err(|e| CliError::validation(stage, format!("{}: {e}", name.as_str())))?;
            docs.push(ModelDoc {
                name: name.as_str(),
                label: f.model.clone(),
                reports: s.reports,
                interval_coverage: interval_coverage(f).ok(),
                notes: s.notes,
            });
        }
        let mut text = String::new();
        for (stratum, title) in [
            (Stratum::All, "All weeks"),
            (Stratum::Level3, "Level 3 bursts (highest intensity level)"),
            (Stratum::Level2, "Level 2 bursts"),
        ] {
            let cols: Vec<(&str, &AccuracyReport)> = docs
                .iter()
                .filter_map(|d| d.reports.iter().find(|r| r.stratum == stratum).map(|r| (d.label.as_str(), r)))
                .collect();
            if !cols.is_empty() {
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(&render_table(title, &cols));
            }
        }
        let zero_weeks = self.series.counts().iter().filter(|&&c| c == 0).count();
        if zero_weeks > 0 {
            text.push_str(&format!(
                "\nMAPE and SMAPE exclude the {zero_weeks} weeks with zero events.\n"
            ));
        }
        let doc = json!({
            "credible_level": self.config.bssm.credible_level,
            "burst_weeks": bursts.burst_weeks(),
            "models": docs,
        });
        self.write(
            stage,
            vec![("evaluation.json", json_bytes(&doc)), ("evaluation.txt", text.into_bytes())],
        )
    }

    fn plot(&mut self) -> Result<(), CliError> {
        let forecasts = self.all_forecasts()?;
        let forecast = forecasts
            .iter()
            .find(|(m, _)| *m == ModelName::Bssm)
            .or(forecasts.first())
            .map(|(_, f)| f.clone())
            .expect("models is non-empty");
        let bursts = self.ensure_bursts()?.clone();
        let mut buf = Vec::new();
        emit_plot_data(&forecast, &bursts, &mut buf)?;
        self.write(Stage::Plot, vec![("plot_data.csv", buf)])
    }

    fn manifest(&mut self, started: SystemTime, clock: Instant) -> Result<(), CliError> {
        let input_bytes = std::fs::read(&self.config.input_path).unwrap_or_default();
        let doc = json!({
            "tool": "burstcast",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": "pipeline",
            "seed": self.config.seed,
            "config": self.config.resolved,
            "input": {
                "path": self.config.input_path.display().to_string(),
                "weeks": self.series.len(),
                "fnv1a": format!("{:016x}", fnv1a_bytes(&input_bytes)),
            },
            "artifacts": self.artifacts,
            "warnings": self.warnings,
            "started_unix_seconds": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            "wall_time_seconds": clock.elapsed().as_secs_f64(),
        });
        let path = self.config.output_dir.join("manifest.json");
        std::fs::write(&path, json_bytes(&doc))
            .map_err(|e| CliError::validation(Stage::Manifest, format!("cannot write {}: {e}", path.display())))
    }
}

pub fn run_subcommand(cmd: Subcommand, config: &PipelineConfig) -> Result<RunReport, CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut run = Run::new(config)?;
    match cmd {
        Subcommand::Stats => run.stats()?,
        Subcommand::Bursts => run.bursts()?,
        Subcommand::Forecast => run.forecast()?,
        Subcommand::Baselines => {
            if run.classical_models().is_empty() {
                return Err(CliError::validation(Stage::Baselines, "`models` selects no classical model"));
            }
            run.baselines()?
        }
        Subcommand::Evaluate => run.evaluate()?,
        Subcommand::Pipeline => {
            run.stats()?;
            run.bursts()?;
            if config.has_model(ModelName::Bssm) {
                run.forecast()?;
            }
            if !run.classical_models().is_empty() {
                run.baselines()?;
            }
            run.evaluate()?;
            run.plot()?;
            run.manifest(started, clock)?;
        }
    }
    Ok(RunReport {
        output_dir: config.output_dir.clone(),
        artifacts: run.artifacts,
        warnings: run.warnings,
    })
}
