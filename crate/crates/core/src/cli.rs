//! The `concnet` command line: subcommands over the library pipelines.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use crate::baselines::{BaselineKind, BaselineModel, MA_WINDOW_GRID};
use crate::concurrent::{LossKind, ShareModel};
use crate::config::{RunConfig, SeedSetting};
use crate::data::{compute_scaler, load_panel, market_shares, split, write_panel, PanelDataset, Scaler, ShareMatrix, SplitSpec, SplitViews};
use crate::error::{Error, Result};
use crate::evaluation::{
    mape, partial_dependence, predicts_zero, rolling_evaluate, select_ma_window, write_mape_summary, write_pdp, write_predictions,
    EvaluationReport, PredictionRecord, RescaledForecaster,
};
use crate::features::{build_batches, FeatureSpec};
use crate::neuralnet::{Architecture, WeightNet};
use crate::rng::{substream, tag};
use crate::simulator::{simulate, write_truth, CovariateProcess, GenerativeSpec, InitialDistribution};
use crate::theory::{
    bernstein_constants, contraction_check, dispersion_moments, empirical_contraction, estimate_lipschitz, initial_rates,
    k_geometric, one_step_rates, poisson_moment_check, random_state_pairs, risk_decay_experiment, generalization_bound,
    write_decay_table, write_moment_table, BoundInputs, DecayEstimator, RiskDecayConfig, TheoryReport,
};
use crate::trainer::{default_grid, select_model, TrainData, Variant};

#[derive(Debug, Parser)]
#[command(name = "concnet", version, about = "Competition-aware market-share forecasting")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration (a previous manifest works too).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// feed_forward_direct | concurrent | concurrent_pretrained
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// l1 | poisson
    #[arg(long, global = true)]
    pub loss: Option<String>,
    /// Panel CSV (overrides `data.path`).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a panel from the configured generative model.
    Simulate,
    /// Fit the architecture grid and keep the best validation model.
    Train,
    /// Rolling test-period forecasts of a saved model.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// MAPE summary of baselines, a saved model, or an external predictions file.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Partial dependence of φ on one feature.
    Pdp {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        feature: String,
    },
    /// Lipschitz, contraction, Bernstein, bound and moment checks.
    CheckTheory {
        /// Check a trained weight network instead of the simulated one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also run the excess-risk decay experiment.
        #[arg(long)]
        decay: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Pdp { .. } => "pdp",
            Command::CheckTheory { .. } => "check-theory",
        }
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = err.print();
                return 0;
            }
            eprintln!("{}", err.render());
            eprintln!("error class=config code=1 reason=\"invalid command line\"");
            return 1;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(err) => {
            let class = err.class();
            let reason = err.to_string().replace(['\n', '"'], " ");
            eprintln!("error class={} code={} reason=\"{reason}\"", class.as_str(), class.exit_code());
            class.exit_code()
        }
    }
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    if let Some(seed) = common.seed {
        cfg.seed = SeedSetting::Fixed(seed);
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(v) = &common.variant {
        cfg.model.train.variant = v.parse::<Variant>()?;
    }
    if let Some(l) = &common.loss {
        cfg.model.train.loss = l.parse::<LossKind>()?;
    }
    if let Some(d) = &common.data {
        cfg.data.path = Some(d.clone());
    }
    cfg.resolve()
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    cfg.write_manifest(cli.command.name())?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Predict { model } => cmd_predict(&cfg, model.as_deref()),
        Command::Evaluate { model, predictions } => cmd_evaluate(&cfg, model.as_deref(), predictions.as_deref()),
        Command::Pdp { model, feature } => cmd_pdp(&cfg, model.as_deref(), feature),
        Command::CheckTheory { model, decay } => cmd_check_theory(&cfg, model.as_deref(), *decay),
    }
}

fn create(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(cfg.out.join(name))?))
}

fn generative_spec(cfg: &RunConfig, phi: WeightNet) -> Result<GenerativeSpec> {
    let sim = &cfg.simulate;
    Ok(GenerativeSpec {
        phi: Arc::new(phi),
        scaler: Scaler::constant(sim.scale, sim.n)?,
        covariates: CovariateProcess::IidUniform {
            lo: 0.0,
            hi: 1.0,
            p: sim.covariates,
        },
        d: sim.d,
        n: sim.n,
        init: if sim.init_rate > 0.0 {
            InitialDistribution::PoissonAt(sim.init_rate)
        } else {
            InitialDistribution::Zeros
        },
        seed: cfg.seed(),
    })
}

fn simulated_phi(cfg: &RunConfig) -> Result<WeightNet> {
    WeightNet::affine_softplus(&cfg.simulate.coeffs, cfg.simulate.bias)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let spec = generative_spec(cfg, simulated_phi(cfg)?)?;
    let sim = simulate(&spec)?;
    write_panel(&sim.panel, Some(&spec.scaler), create(cfg, "panel.csv")?)?;
    write_truth(&sim, create(cfg, "truth.csv")?)?;
    log::info!("simulated {} products x {} weeks", spec.d, spec.n);
    Ok(())
}

struct Inputs {
    panel: PanelDataset,
    scaler: Scaler,
    shares: ShareMatrix,
    views: SplitViews,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let path = cfg.data_path()?;
    let panel = load_panel(path, &cfg.data.columns)?;
    let scaler = compute_scaler(&panel, cfg.data.scaler, cfg.data.scaler_floor)?;
    let shares = market_shares(&panel, &scaler)?;
    let views = split(&panel, SplitSpec::trailing(panel.n(), cfg.split.valid_weeks, cfg.split.test_weeks)?)?;
    Ok(Inputs {
        panel,
        scaler,
        shares,
        views,
    })
}

fn model_path(cfg: &RunConfig, given: Option<&Path>) -> PathBuf {
    given.map_or_else(|| cfg.out.join("model.txt"), Path::to_path_buf)
}

fn load_model(cfg: &RunConfig, given: Option<&Path>) -> Result<ShareModel> {
    let path = model_path(cfg, given);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?;
    ShareModel::from_text(&text)
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let features = FeatureSpec::for_panel(&inputs.panel, cfg.horizon, cfg.model.lag_count)?;
    let data = TrainData::build(&inputs.panel, &inputs.shares, &inputs.scaler, &features, &inputs.views)?;
    let grid = if cfg.model.grid.is_empty() {
        default_grid(features.input_dim())
    } else {
        cfg.model
            .grid
            .iter()
            .map(|hidden| Architecture::new(features.input_dim(), hidden.clone()))
            .collect::<Result<Vec<_>>>()?
    };
    let selection = select_model(&grid, &features, &data, &cfg.model.train)?;
    std::fs::write(cfg.out.join("model.txt"), selection.model.to_text())?;

    let mut log_csv = csv::Writer::from_writer(create(cfg, "training_log.csv")?);
    log_csv.write_record(["epoch", "train_loss", "valid_mape"])?;
    for (e, (l, m)) in selection.report.train_loss.iter().zip(&selection.report.valid_mape).enumerate() {
        log_csv.write_record([(e + 1).to_string(), l.to_string(), m.to_string()])?;
    }
    log_csv.flush()?;

    let mut cand = csv::Writer::from_writer(create(cfg, "candidates.csv")?);
    cand.write_record(["index", "hidden", "best_valid_mape", "selected_epoch", "zero_prediction", "status"])?;
    for c in &selection.candidates {
        let hidden = c.architecture.hidden.iter().map(ToString::to_string).collect::<Vec<_>>().join("x");
        match &c.result {
            Ok(r) => cand.write_record([
                c.index.to_string(),
                hidden,
                r.best_valid_mape().to_string(),
                r.selected_epoch.to_string(),
                r.zero_prediction.to_string(),
                if c.index == selection.index { "selected" } else { "ok" }.to_string(),
            ])?,
            Err(e) => cand.write_record([c.index.to_string(), hidden, String::new(), String::new(), String::new(), format!("failed: {e}")])?,
        }
    }
    cand.flush()?;
    if selection.report.small_transfer_weights {
        log::warn!("transferred weights are very small; the pretrained model may start near zero");
    }
    Ok(())
}

fn check_horizon(cfg: &RunConfig, model: &ShareModel) -> Result<()> {
    let h = model.features().horizon;
    if h != cfg.horizon {
        return Err(Error::Config(format!("model was trained for horizon {h}, run asks for {}", cfg.horizon)));
    }
    Ok(())
}

fn cmd_predict(cfg: &RunConfig, model: Option<&Path>) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let model = load_model(cfg, model)?;
    check_horizon(cfg, &model)?;
    let report = rolling_evaluate(&model, &inputs.panel, &inputs.shares, inputs.views.test.clone())?;
    write_predictions(&[report], create(cfg, "predictions.csv")?)
}

fn cmd_evaluate(cfg: &RunConfig, model: Option<&Path>, predictions: Option<&Path>) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let reports = match predictions {
        Some(path) => external_reports(cfg, &inputs, path)?,
        None => {
            let (panel, shares, test) = (&inputs.panel, &inputs.shares, inputs.views.test.clone());
            let lv = BaselineModel::new(BaselineKind::LastValue, cfg.horizon)?;
            let (ma, _) = select_ma_window(panel, shares, cfg.horizon, inputs.views.valid.clone(), &MA_WINDOW_GRID)?;
            let mut reports = vec![
                rolling_evaluate(&lv, panel, shares, test.clone())?,
                rolling_evaluate(&ma, panel, shares, test.clone())?,
                rolling_evaluate(&RescaledForecaster { inner: lv, target_total: 1.0 }, panel, shares, test.clone())?,
                rolling_evaluate(&RescaledForecaster { inner: ma, target_total: 1.0 }, panel, shares, test.clone())?,
            ];
            if model.is_some() || cfg.out.join("model.txt").exists() {
                let m = load_model(cfg, model)?;
                check_horizon(cfg, &m)?;
                reports.push(rolling_evaluate(&m, panel, shares, test)?);
            }
            reports
        }
    };
    write_predictions(&reports, create(cfg, "predictions.csv")?)?;
    write_mape_summary(&reports, create(cfg, "mape_summary.csv")?)
}

/// Scores a `product_id, week, predicted_share[, model]` file against the panel's shares.
fn external_reports(cfg: &RunConfig, inputs: &Inputs, path: &Path) -> Result<Vec<EvaluationReport>> {
    let products: HashMap<&str, usize> = inputs.panel.product_ids().iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let weeks: HashMap<i64, usize> = inputs.panel.weeks().iter().enumerate().map(|(t, &w)| (w, t)).collect();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let (pc, wc, yc) = (col("product_id")?, col("week")?, col("predicted_share")?);
    let mc = headers.iter().position(|h| h == "model");

    let mut by_model: Vec<(String, Vec<PredictionRecord>)> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |column: &str, reason: &str| Error::Malformed {
            row: row + 2,
            column: column.to_string(),
            reason: reason.to_string(),
        };
        let product = *products.get(&rec[pc]).ok_or_else(|| bad("product_id", "unknown product"))?;
        let week_label = crate::data::parse_week(&rec[wc]).ok_or_else(|| bad("week", "not a week"))?;
        let t = *weeks.get(&week_label).ok_or_else(|| bad("week", "week not in panel"))?;
        let predicted: f64 = rec[yc].trim().parse().map_err(|_| bad("predicted_share", "not a number"))?;
        let name = mc.map_or("external", |c| &rec[c]).to_string();
        let record = PredictionRecord {
            product,
            product_id: rec[pc].to_string(),
            week_index: t,
            week: week_label,
            actual: inputs.shares.get(product, t),
            predicted,
        };
        match by_model.iter_mut().find(|(m, _)| *m == name) {
            Some((_, v)) => v.push(record),
            None => by_model.push((name, vec![record])),
        }
    }
    if by_model.is_empty() {
        return Err(Error::EmptyFile);
    }
    by_model
        .into_iter()
        .map(|(model, records)| {
            let preds: Vec<f64> = records.iter().map(|r| r.predicted).collect();
            let actuals: Vec<f64> = records.iter().map(|r| r.actual).collect();
            Ok(EvaluationReport {
                model,
                horizon: cfg.horizon,
                mape: mape(&preds, &actuals)?,
                zero_prediction: predicts_zero(&preds, &actuals),
                records,
                min_read_lag: None,
            })
        })
        .collect()
}

fn cmd_pdp(cfg: &RunConfig, model: Option<&Path>, feature: &str) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let model = load_model(cfg, model)?;
    let spec = model.features();
    let s = inputs.scaler.values();
    let train = build_batches(&inputs.panel, &inputs.shares, s, spec, inputs.views.train.clone());
    let test = build_batches(&inputs.panel, &inputs.shares, s, spec, inputs.views.test.clone());
    let curve = partial_dependence(model.net(), spec, &train, &test, feature)?;
    if curve.degenerate {
        log::warn!("`{feature}` has fewer distinct training values than bins; one point per value");
    }
    write_pdp(&curve, create(cfg, "pdp.csv")?)
}

fn cmd_check_theory(cfg: &RunConfig, model: Option<&Path>, decay: bool) -> Result<()> {
    let th = &cfg.theory;
    let phi = match model {
        Some(_) => load_model(cfg, model)?.net().clone(),
        None => simulated_phi(cfg)?,
    };
    let spec = generative_spec(cfg, phi.clone())?;
    let seed = cfg.seed();

    let p = cfg.simulate.covariates;
    let mut rng = substream(seed, &[tag::COVARIATE, u64::MAX]);
    let thetas: Vec<Vec<f64>> = (0..th.theta_samples.max(1)).map(|_| (0..p).map(|_| rng.gen::<f64>()).collect()).collect();
    let lipschitz = estimate_lipschitz(&phi, (0.0, 1.0), &thetas, th.lipschitz_grid)?;
    let contraction = contraction_check(&phi, &spec.scaler);
    let pairs = random_state_pairs(spec.d, th.state_pairs, cfg.simulate.scale.round() as u64, seed);
    let empirical = empirical_contraction(&spec, &pairs, th.replicas)?;
    let constants = bernstein_constants(spec.d, &spec.scaler);
    let bound_value = if contraction.rho < 1.0 {
        Some(generalization_bound(
            &BoundInputs {
                n: spec.n,
                delta: th.delta,
                tau: contraction.tau,
                rho: contraction.rho,
                m: constants.m,
                v1: constants.v1,
                v2: constants.v2,
            },
            th.log_variant,
        )?)
    } else {
        None
    };
    let mut moments = Vec::new();
    for &lambda in &th.moment_lambdas {
        moments.extend(poisson_moment_check(lambda, th.moment_k_max, th.moment_samples, seed)?);
    }
    let rates = one_step_rates(&spec, &pairs[0].0)?;
    let h_moments = dispersion_moments(&rates, 4, th.dispersion_outer, th.dispersion_inner, &constants, seed);
    let g_moments = dispersion_moments(&initial_rates(spec.d, spec.init), 4, th.dispersion_outer, th.dispersion_inner, &constants, seed);
    let decay_report = if decay || th.decay {
        Some(risk_decay_experiment(
            &spec,
            &RiskDecayConfig {
                n_grid: th.decay_n_grid.clone(),
                replicas: th.decay_replicas,
                test_len: th.decay_test_len,
                seed,
                estimator: DecayEstimator::default_erm(th.decay_epochs, 1e-3),
            },
        )?)
    } else {
        None
    };

    let report = TheoryReport {
        lipschitz,
        contraction,
        empirical: Some(empirical),
        constants,
        n: spec.n,
        delta: th.delta,
        log_variant: th.log_variant,
        k: k_geometric(contraction.rho, spec.n - 1),
        bound_value,
        moments,
        h_moments,
        g_moments,
        decay: decay_report,
    };
    std::fs::write(cfg.out.join("theory.txt"), report.render())?;
    write_moment_table(&report.moments, create(cfg, "moments.csv")?)?;
    if let Some(d) = &report.decay {
        write_decay_table(d, create(cfg, "decay.csv")?)?;
    }
    Ok(())
}
