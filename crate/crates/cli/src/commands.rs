use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use diffpca::config::ConfigDocument;
use diffpca::datagen::{self, Dataset, NestedOptions};
use diffpca::dimred::{self, FitData, FitOptions, Mode, Truncation};
use diffpca::instruments::Instrument;
use diffpca::lsm::{self, ExercisePolicy, LsmOptions, StudyOptions};
use diffpca::models::{Dynamics, Model, ModelConfig};
use diffpca::regression::{self, BasisSpec, Lambdas, RegressionOptions};
use diffpca::rng::derive_seed;

use crate::args::*;

pub const MANIFEST: &str = "manifest.json";

/// Default truncation when neither `--tol` nor `--dim` is given.
const DEFAULT_RELATIVE_TOL: f64 = 0.01;

/// Seed stream of the exercise policy fitted for callable instruments.
const POLICY_STREAM: u64 = 1 << 32;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Config(String),
    /// Numerical or I/O failure: exit code 3.
    Failure(String),
}

impl From<diffpca::Error> for CliError {
    fn from(e: diffpca::Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Everything needed to repeat a run.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument: Option<Instrument>,
    pub run: Command,
}

/// Model and instrument configurations, from files or from a manifest.
#[derive(Debug, Default, Clone)]
struct Inputs {
    model: Option<ModelConfig>,
    instrument: Option<Instrument>,
}

impl Inputs {
    fn from_files(config: &ConfigArgs) -> Result<Self> {
        let model_doc = config.model.as_deref().map(ConfigDocument::read).transpose()?;
        let instrument_doc = match (&config.instrument, &model_doc) {
            (Some(path), _) => Some(ConfigDocument::read(path)?),
            (None, doc) => doc.clone(),
        };
        Ok(Inputs {
            model: model_doc.and_then(|d| d.model),
            instrument: instrument_doc.and_then(|d| d.instrument),
        })
    }

    fn model(&self) -> Result<Model> {
        let cfg = self
            .model
            .clone()
            .ok_or_else(|| CliError::Config("`model`: missing (pass --model)".into()))?;
        Ok(Model::new(cfg)?)
    }

    fn instrument(&self) -> Result<Instrument> {
        self.instrument
            .clone()
            .ok_or_else(|| CliError::Config("`instrument`: missing (pass --instrument or add it to the model file)".into()))
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let text = fs::read_to_string(&args.manifest)
                .map_err(|e| CliError::Config(format!("`{}`: {e}", args.manifest.display())))?;
            let manifest: Manifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("`{}`: {e}", args.manifest.display())))?;
            let mut run = manifest.run;
            if let Some(out) = args.out {
                *out_dir_mut(&mut run) = out;
            }
            let inputs = Inputs {
                model: manifest.model,
                instrument: manifest.instrument,
            };
            execute(&run, &inputs)
        }
        cmd => {
            let inputs = match config_args(&cmd) {
                Some(c) => Inputs::from_files(c)?,
                None => Inputs::default(),
            };
            execute(&cmd, &inputs)
        }
    }
}

fn config_args(cmd: &Command) -> Option<&ConfigArgs> {
    match cmd {
        Command::Generate(a) => Some(&a.config),
        Command::Risk(a) => Some(&a.config),
        Command::Pca(a) => Some(&a.config),
        Command::Lsm(a) => Some(&a.config),
        Command::Study(a) => Some(&a.config),
        Command::Regress(_) | Command::Bench(_) | Command::Run(_) => None,
    }
}

fn out_dir_mut(cmd: &mut Command) -> &mut PathBuf {
    match cmd {
        Command::Generate(a) => &mut a.out,
        Command::Risk(a) => &mut a.out,
        Command::Pca(a) => &mut a.out,
        Command::Regress(a) => &mut a.out,
        Command::Lsm(a) => &mut a.out,
        Command::Study(a) => &mut a.out,
        Command::Bench(a) => &mut a.out,
        Command::Run(_) => unreachable!("nested run"),
    }
}

fn execute(cmd: &Command, inputs: &Inputs) -> Result<()> {
    let mut cmd = cmd.clone();
    let out = out_dir_mut(&mut cmd).clone();
    fs::create_dir_all(&out)?;
    match &cmd {
        Command::Generate(a) => generate(a, inputs)?,
        Command::Risk(a) => risk(a, inputs)?,
        Command::Pca(a) => pca(a, inputs)?,
        Command::Regress(a) => regress(a)?,
        Command::Lsm(a) => lsm_cmd(a, inputs)?,
        Command::Study(a) => study(a, inputs)?,
        Command::Bench(a) => bench(a)?,
        Command::Run(_) => unreachable!("nested run"),
    }
    let manifest = Manifest {
        tool: "diffpca".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        model: inputs.model.clone(),
        instrument: inputs.instrument.clone(),
        run: cmd,
    };
    write_json(&out.join(MANIFEST), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn truncation(t: &TruncationArgs) -> Result<Truncation> {
    match (t.dim, t.tol) {
        (Some(p), _) => Ok(Truncation::Dim(p)),
        (None, Some(tol)) if (0.0..=1.0).contains(&tol) => Ok(Truncation::Relative(tol)),
        (None, Some(tol)) => Err(CliError::Config(format!("`tol`: must be a fraction in [0, 1], got {tol}"))),
        (None, None) => Ok(Truncation::Relative(DEFAULT_RELATIVE_TOL)),
    }
}

/// Exercise policy for a callable instrument seen from `exposure`, fitted by
/// LSM with default options on the call dates after it.
fn exercise_policy(model: &Model, instrument: &Instrument, exposure: f64, seed: u64) -> Result<Option<ExercisePolicy>> {
    if !instrument.is_callable() {
        return Ok(None);
    }
    let later: Vec<f64> = instrument.call_dates().iter().copied().filter(|d| *d > exposure).collect();
    if later.is_empty() {
        return Ok(None);
    }
    let options = LsmOptions {
        seed: derive_seed(seed, POLICY_STREAM),
        ..LsmOptions::default()
    };
    Ok(Some(lsm::fit_policy(model, &instrument.with_call_dates(later), &options)?))
}

fn generate(a: &GenerateArgs, inputs: &Inputs) -> Result<()> {
    let model = inputs.model()?;
    let instrument = inputs.instrument()?;
    let policy = exercise_policy(&model, &instrument, a.exposure, a.seed)?;
    let data = datagen::generate_with_policy(&model, &instrument, a.exposure, a.m, a.seed, policy.as_ref())?;
    data.write_csv(&a.out.join("dataset.csv"))?;
    println!("wrote {} examples of dimension {} to {}", data.m(), data.n(), a.out.join("dataset.csv").display());
    Ok(())
}

fn risk(a: &RiskArgs, inputs: &Inputs) -> Result<()> {
    let model = inputs.model()?;
    let instrument = inputs.instrument()?;
    let policy = exercise_policy(&model, &instrument, a.exposure, a.seed)?;
    let options = NestedOptions::new(a.inner, a.seed).policy(policy.as_ref());
    let r = datagen::nested_risk_reports_with(&model, &instrument, a.exposure, a.m, options)?;
    r.write_csv(&a.out.join("risk_reports.csv"))?;
    println!("wrote {} risk reports ({} inner paths each)", r.m_outer(), r.m_inner);
    Ok(())
}

fn pca(a: &PcaArgs, inputs: &Inputs) -> Result<()> {
    let mode: Mode = a.mode.into();
    let options = FitOptions::new(truncation(&a.truncation)?)
        .central(a.truncation.central)
        .normalize(a.normalize)
        .standardize(a.standardize);
    let (encoder, labels) = match (&a.data, mode) {
        (Some(_), Mode::Risk) => {
            return Err(CliError::Config(
                "`data`: risk mode simulates its own risk reports; pass --model and --instrument instead".into(),
            ))
        }
        (Some(path), _) => {
            let data = Dataset::read_csv(path)?;
            (dimred::fit(mode, FitData::Dataset(&data), options)?, data.meta.labels.clone())
        }
        (None, _) => {
            let model = inputs.model()?;
            let instrument = inputs.instrument()?;
            let labels = model.state_labels(a.exposure)?;
            let policy = exercise_policy(&model, &instrument, a.exposure, a.seed)?;
            let enc = if mode == Mode::Risk {
                let nested = NestedOptions::new(a.inner, a.seed).policy(policy.as_ref());
                let r = datagen::nested_risk_reports_with(&model, &instrument, a.exposure, a.m, nested)?;
                dimred::fit(mode, FitData::RiskReports(&r), options)?
            } else {
                let d = datagen::generate_with_policy(&model, &instrument, a.exposure, a.m, a.seed, policy.as_ref())?;
                dimred::fit(mode, FitData::Dataset(&d), options)?
            };
            (enc, labels)
        }
    };
    write_json(&a.out.join("encoder.json"), &encoder)?;
    dimred::write_eigen_report(&a.out.join("eigen_report.csv"), &encoder, &labels)?;
    write_json(
        &a.out.join("pca_summary.json"),
        &json!({
            "mode": encoder.mode,
            "central": encoder.central,
            "dim": encoder.dim(),
            "spectrum": encoder.spectrum,
            "truncated_mass": encoder.truncated_mass,
            "total_mass": encoder.total_mass(),
            "warning": encoder.warning,
        }),
    )?;
    println!(
        "{:?} PCA kept {} of {} axes (truncated mass {:.3e} of {:.3e})",
        mode,
        encoder.dim(),
        encoder.input_dim(),
        encoder.truncated_mass,
        encoder.total_mass()
    );
    Ok(())
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len().max(1) as f64
}

fn regress(a: &RegressArgs) -> Result<()> {
    let data = Dataset::read_csv(&a.data)?;
    let (train, test) = regression::train_test_split(data.m(), a.test_fraction, a.seed)?;
    if train.is_empty() {
        return Err(CliError::Config("`test_fraction`: leaves no training rows".into()));
    }
    let x = regression::select_rows(&data.x, &train);
    let z = regression::select_rows(&data.z, &train);
    let y: Vec<f64> = train.iter().map(|&i| data.y[i]).collect();
    let encoder = if a.encode {
        let opts = FitOptions::new(truncation(&a.truncation)?).central(a.truncation.central);
        Some(dimred::fit_rows(Mode::Differential, &z, opts)?)
    } else {
        None
    };
    let (inputs, labels) = match &encoder {
        Some(e) => (e.encode_rows(&x)?, e.feature_sensitivities(&z)?),
        None => (x, z),
    };
    let basis = BasisSpec::monomials(inputs.ncols(), a.degree);
    let opts = RegressionOptions { rescale: a.rescale };
    let model = if a.differential {
        let lambdas = match &a.lambdas {
            Some(l) => Lambdas::Given(l.clone()),
            None => Lambdas::Auto,
        };
        regression::fit_differential(&inputs, &y, &labels, &basis, &lambdas, opts)?
    } else {
        regression::fit_value(&inputs, &y, &basis, a.lambda, opts)?
    };
    let test_mse = if test.is_empty() {
        None
    } else {
        let xt = regression::select_rows(&data.x, &test);
        let xt = match &encoder {
            Some(e) => e.encode_rows(&xt)?,
            None => xt,
        };
        let yt: Vec<f64> = test.iter().map(|&i| data.y[i]).collect();
        Some(mse(&model.predict_rows(&xt)?, &yt))
    };
    write_json(
        &a.out.join("regression.json"),
        &json!({
            "model": model,
            "encoder": encoder,
            "train_rows": train.len(),
            "test_rows": test.len(),
            "train_mse": model.diagnostics.train_mse,
            "test_mse": test_mse,
        }),
    )?;
    println!(
        "fitted {} coefficients, train MSE {:.6e}{}",
        model.beta.len(),
        model.diagnostics.train_mse,
        test_mse.map(|v| format!(", test MSE {v:.6e}")).unwrap_or_default()
    );
    Ok(())
}

fn lsm_cmd(a: &LsmArgs, inputs: &Inputs) -> Result<()> {
    let model = inputs.model()?;
    let instrument = inputs.instrument()?;
    let options = LsmOptions {
        m_train: a.m,
        degree: a.degree,
        truncation: truncation(&a.truncation)?,
        central: a.truncation.central,
        differential: a.differential,
        seed: a.seed,
    };
    let policy = lsm::fit_policy(&model, &instrument, &options)?;
    let (price, stderr) = lsm::price_lower_bound(&model, &instrument, &policy, a.m_price, derive_seed(a.seed, u64::MAX))?;
    let lattice = match a.lattice_steps {
        Some(steps) => Some(lattice_price(&model, &instrument, steps)?),
        None => None,
    };
    write_json(&a.out.join("policy.json"), &policy)?;
    write_json(
        &a.out.join("lsm_report.json"),
        &json!({
            "price": price,
            "stderr": stderr,
            "lattice": lattice,
            "lattice_within_3_stderr": lattice.map(|l| (price - l).abs() <= 3.0 * stderr),
            "call_dates": instrument.call_dates(),
            "features": policy.rules.iter().map(|r| match &r.continuation {
                lsm::Continuation::Zero => 0,
                lsm::Continuation::Fitted { encoder, .. } => encoder.dim(),
            }).collect::<Vec<_>>(),
        }),
    )?;
    match lattice {
        Some(l) => println!("price {price:.6} +/- {stderr:.6} (lattice {l:.6})"),
        None => println!("price {price:.6} +/- {stderr:.6}"),
    }
    Ok(())
}

fn lattice_price(model: &Model, instrument: &Instrument, steps: usize) -> Result<f64> {
    match (model, instrument) {
        (Model::Equity(m), Instrument::BermudanPut { asset, strike, call_dates }) => {
            let cfg = m.config();
            if cfg.dynamics != Dynamics::Lognormal {
                return Err(CliError::Config("`dynamics`: the lattice needs lognormal dynamics".into()));
            }
            Ok(lsm::binomial_bermudan_put(
                cfg.spots[*asset],
                *strike,
                cfg.rate,
                cfg.vols[*asset],
                call_dates,
                steps,
            )?)
        }
        _ => Err(CliError::Config(
            "`lattice_steps`: only available for a Bermudan put on an equity model".into(),
        )),
    }
}

fn study(a: &StudyArgs, inputs: &Inputs) -> Result<()> {
    let model = inputs.model()?;
    let instrument = inputs.instrument()?;
    let trunc = truncation(&a.truncation)?;
    let options = StudyOptions {
        m_train: a.m,
        m_test: a.m_test,
        m_inner: a.inner,
        degree_raw: a.degree_raw,
        degree_features: a.degree,
        truncation: trunc,
        central: a.truncation.central,
        policy: LsmOptions {
            m_train: a.m,
            degree: a.degree,
            truncation: trunc,
            central: a.truncation.central,
            differential: true,
            seed: a.seed,
        },
        seed: a.seed,
    };
    let report = lsm::continuation_study(&model, &instrument, a.date, &options)?;
    write_json(&a.out.join("study.json"), &report)?;
    fs::write(a.out.join("study_scatter.csv"), report.scatter_csv()?)?;
    for m in &report.methods {
        println!("{:<18} rmse {:.6e} ({} inputs)", m.method, m.rmse, m.n_features);
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let sizes = diffpca::bench::BenchSizes {
        cov_rows: a.cov_rows,
        cov_dim: a.dim,
        eigen_dim: a.eigen_dim.unwrap_or(a.dim),
    };
    let report = diffpca::bench::run(sizes, a.seed)?;
    write_json(&a.out.join("bench.json"), &report)?;
    for t in &report.timings {
        println!("{:<16} {}x{} {:.4} s", t.name, t.rows, t.dim, t.seconds);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    Ok(())
}
