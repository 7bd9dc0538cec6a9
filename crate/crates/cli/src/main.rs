use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anisofield::dataset::{Dataset, DatasetManifest, DatasetWriter};
use anisofield::estimator::{train_with, DataProvenance, EstimatorKind, ModelArtifact, TrainingConfig};
use anisofield::ml::SearchConfig;
use anisofield::nn::{LayerShape, LayerSpec};
use anisofield::simulate::{generate_dataset, simulate_grf, training_param_grid, ParamGrid};
use anisofield::variogram::{variogram_map, varmap_image, NV_MAX_LAG};
use anisofield::{AnisotropyParams, FieldGrid, GridDomain, MaternSpec};
use anisofield_cli::aic::{aic_experiment, aic_to_csv, preferred_fraction, DEFAULT_LAMBDAS};
use anisofield_cli::bench::{benchmark, validation_param_grid, BenchConfig, Estimators};
use anisofield_cli::records::{records_to_csv, timings_to_csv, EstimateRecord, Method};
use anisofield_cli::scan::{scan_to_csv, window_scan, RasterGrid};
use anisofield_cli::summary::{summaries_to_csv, summarize};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Anisotropic Matérn random fields: simulation, estimation and benchmarks.
#[derive(Parser, Debug)]
#[command(name = "anisofield", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core; 1 = serial reference run).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file (default: standard output for text outputs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Ml,
    Nf,
    Nv,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ml => Method::Ml,
            MethodArg::Nf => Method::Nf,
            MethodArg::Nv => Method::Nv,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum KindArg {
    Nf,
    Nv,
}

impl From<KindArg> for EstimatorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Nf => EstimatorKind::Nf,
            KindArg::Nv => EstimatorKind::Nv,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one field. CSV: `height` rows of `width` values, row 0 is y = 1.
    Simulate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 1.5)]
        nu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long, default_value_t = 16)]
        height: usize,
    },
    /// Write a labeled training dataset (binary file plus `<out>.manifest`).
    MakeDataset {
        /// Configurations drawn without replacement from the training grid.
        #[arg(long, default_value_t = 20_000)]
        configs: usize,
        /// Use all 450,000 training-grid configurations.
        #[arg(long)]
        full_grid: bool,
        #[arg(long, default_value_t = 1)]
        fields_per_config: usize,
        #[arg(long, default_value_t = 1.5)]
        nu: f64,
    },
    /// Empirical variogram map of a field CSV. CSV: 2K+1 rows (h_y = −K..K)
    /// of 2K+1 values (h_x = −K..K); lags without pairs are NaN.
    Varmap {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = NV_MAX_LAG)]
        max_lag: usize,
        /// Emit the filled 13×13 network input instead of the raw map.
        #[arg(long)]
        image: bool,
        /// Emit pair counts instead of semivariances.
        #[arg(long, conflicts_with = "image")]
        counts: bool,
    },
    /// Train an NF or NV network on a dataset; writes a model file.
    Train {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 500)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0.01)]
        weight_decay: f64,
        /// Force 180° rotation augmentation on (default: on for NF, off for NV).
        #[arg(long, conflicts_with = "no_augment")]
        augment: bool,
        #[arg(long)]
        no_augment: bool,
        #[arg(long, default_value_t = 0.0)]
        validation_fraction: f64,
    },
    /// Estimate (alpha, lambda, theta) of one field.
    /// CSV: alpha,lambda,theta,sigma2,converged,out_of_domain.
    Estimate {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Model file (NF and NV).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 1.5)]
        nu: f64,
        /// Standardize the field (observed mean 0, std 1) first.
        #[arg(long)]
        standardize: bool,
    },
    /// Simulation benchmark over validation configurations. Writes one
    /// record per (configuration, replicate, method); see --summary and
    /// --timing for the binned table and wall times.
    Bench {
        /// Comma-separated methods.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "ml")]
        methods: Vec<MethodArg>,
        #[arg(long)]
        nf_model: Option<PathBuf>,
        #[arg(long)]
        nv_model: Option<PathBuf>,
        /// Configurations drawn from the 23,120-point validation grid.
        #[arg(long, default_value_t = 100)]
        configs: usize,
        #[arg(long)]
        full_grid: bool,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, default_value_t = 1.5)]
        nu: f64,
        /// Binned bias/std table (CSV: parameter,bin,bin_center,method,count,bias,std).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Per-record wall times (CSV: config,replicate,method,seconds).
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Isotropic vs anisotropic AIC on simulated fields (alpha = π/4,
    /// theta = 2, sigma2 = 1, nu = 3/2, 16×16).
    Aic {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDAS)]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
    },
    /// Sliding-window estimates over a raster CSV (NaN = missing).
    /// CSV: row,col,status,alpha,lambda,theta,out_of_domain.
    Scan {
        #[arg(long)]
        raster: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        window: usize,
        #[arg(long, default_value_t = 1.5)]
        nu: f64,
    },
    /// Print a model's layer table and training manifest.
    InspectModel { model: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<anisofield::Error> for Failure {
    fn from(e: anisofield::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let g = &cli.global;
    match cli.command {
        Command::Simulate {
            alpha,
            lambda,
            theta,
            nu,
            sigma2,
            width,
            height,
        } => {
            let params = AnisotropyParams::new(alpha, lambda, theta, sigma2).map_err(usage)?;
            let spec = MaternSpec::new(nu).map_err(usage)?;
            let domain = GridDomain::new(width, height).map_err(usage)?;
            let field = simulate_grf(domain, &params, spec, g.seed)?;
            emit(g, &field.to_csv())
        }
        Command::MakeDataset {
            configs,
            full_grid,
            fields_per_config,
            nu,
        } => {
            let out = required_out(g)?;
            let spec = MaternSpec::new(nu).map_err(usage)?;
            let grid = training_param_grid();
            let (labels, description) = if full_grid {
                (grid.configs(), describe_grid("training grid, all configurations", &grid))
            } else {
                let labels = grid.subsample(configs, g.seed);
                let d = format!(
                    "{} configurations subsampled from the training grid with seed {}",
                    labels.len(),
                    g.seed
                );
                (labels, d)
            };
            let domain = GridDomain::square16();
            let manifest = DatasetManifest {
                records: 0,
                domain,
                nu,
                base_seed: g.seed,
                fields_per_config,
                grid: description,
            };
            let mut writer = DatasetWriter::create(out, manifest)?;
            let total = labels.len() * fields_per_config;
            for (i, sample) in generate_dataset(&labels, domain, spec, fields_per_config, g.seed).enumerate() {
                writer.push(&sample?)?;
                if (i + 1) % 5000 == 0 {
                    eprintln!("{} / {total} fields", i + 1);
                }
            }
            let m = writer.finish()?;
            eprintln!("wrote {} fields to {}", m.records, out.display());
            Ok(())
        }
        Command::Varmap {
            field,
            max_lag,
            image,
            counts,
        } => {
            let f = FieldGrid::read_csv(&field)?;
            let map = variogram_map(&f, max_lag)?;
            let text = if image {
                let img = varmap_image(&map)?;
                grid_csv(&img.pixels, img.side)
            } else if counts {
                let c: Vec<f64> = map.pair_counts().iter().map(|&c| c as f64).collect();
                grid_csv(&c, map.side())
            } else {
                map.to_csv()
            };
            emit(g, &text)
        }
        Command::Train {
            kind,
            dataset,
            epochs,
            batch_size,
            learning_rate,
            weight_decay,
            augment,
            no_augment,
            validation_fraction,
        } => {
            let out = required_out(g)?;
            let kind = EstimatorKind::from(kind);
            let (data, manifest) = Dataset::read(&dataset)?;
            let mut cfg = TrainingConfig::for_kind(kind);
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            cfg.batch_size = batch_size;
            cfg.learning_rate = learning_rate;
            cfg.weight_decay = weight_decay;
            cfg.validation_fraction = validation_fraction;
            cfg.seed = g.seed;
            if augment {
                cfg.augment = true;
            }
            if no_augment {
                cfg.augment = false;
            }
            let provenance = DataProvenance {
                grid: manifest.grid.clone(),
                dataset_seed: manifest.base_seed,
            };
            let artifact = train_with(&data, kind, &cfg, &provenance, |s| match s.validation_loss {
                Some(v) => eprintln!(
                    "epoch {:>4}  loss {:.6}  validation {:.6}  samples {}",
                    s.epoch, s.train_loss, v, s.samples_seen
                ),
                None => eprintln!("epoch {:>4}  loss {:.6}  samples {}", s.epoch, s.train_loss, s.samples_seen),
            })
            .map_err(|e| match e {
                anisofield::Error::Domain { .. } => usage(e),
                other => other.into(),
            })?;
            artifact.save(out)?;
            eprintln!("saved {} model to {}", kind.name(), out.display());
            Ok(())
        }
        Command::Estimate {
            method,
            model,
            field,
            nu,
            standardize,
        } => {
            let method = Method::from(method);
            let spec = MaternSpec::new(nu).map_err(usage)?;
            let estimators = load_estimators(&[method], model.as_deref(), model.as_deref())?;
            let mut f = FieldGrid::read_csv(&field)?;
            if standardize {
                f = f
                    .standardized()
                    .ok_or_else(|| Failure::Runtime("field has zero spread".into()))?;
            }
            let rec = estimators.estimate(method, &f, spec)?;
            if rec.failed {
                return Err(Failure::Runtime("likelihood fit failed".into()));
            }
            emit(g, &estimate_csv(&rec))
        }
        Command::Bench {
            methods,
            nf_model,
            nv_model,
            configs,
            full_grid,
            replicates,
            nu,
            summary,
            timing,
        } => {
            let methods: Vec<Method> = methods.into_iter().map(Method::from).collect();
            let spec = MaternSpec::new(nu).map_err(usage)?;
            let estimators = load_estimators(&methods, nf_model.as_deref(), nv_model.as_deref())?;
            let grid = validation_param_grid();
            let labels = if full_grid {
                grid.configs()
            } else {
                grid.subsample(configs, g.seed)
            };
            let cfg = BenchConfig {
                methods,
                configs: labels,
                replicates,
                seed: g.seed,
                spec,
                domain: GridDomain::square16(),
            };
            let records = benchmark(&cfg, &estimators)?;
            emit(g, &records_to_csv(&records))?;
            let table = summaries_to_csv(&summarize(&records));
            match summary {
                Some(p) => std::fs::write(p, table)?,
                None => eprint!("{table}"),
            }
            if let Some(p) = timing {
                std::fs::write(p, timings_to_csv(&records))?;
            }
            Ok(())
        }
        Command::Aic { lambdas, replicates } => {
            if lambdas.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
                return Err(Failure::Usage("every lambda must lie in (0, 1]".into()));
            }
            let rows = aic_experiment(&lambdas, replicates, g.seed, &SearchConfig::default())?;
            emit(g, &aic_to_csv(&rows))?;
            for &l in &lambdas {
                eprintln!(
                    "lambda {l}: anisotropic model preferred in {:.1}% of replicates",
                    100.0 * preferred_fraction(&rows, l)
                );
            }
            Ok(())
        }
        Command::Scan {
            raster,
            method,
            model,
            window,
            nu,
        } => {
            let method = Method::from(method);
            let spec = MaternSpec::new(nu).map_err(usage)?;
            let estimators = load_estimators(&[method], model.as_deref(), model.as_deref())?;
            let raster = RasterGrid::read(&raster)?;
            let out = window_scan(&raster, method, &estimators, spec, window)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            emit(g, &scan_to_csv(&out.pixels))
        }
        Command::InspectModel { model } => {
            let art = ModelArtifact::load(&model)?;
            emit(g, &inspect(&art)?)
        }
    }
}

fn usage(e: anisofield::Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn required_out(g: &Global) -> CliResult<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| Failure::Usage("this subcommand needs --out <path>".into()))
}

fn emit(g: &Global, text: &str) -> CliResult {
    match &g.out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn grid_csv(values: &[f64], side: usize) -> String {
    values
        .chunks(side)
        .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

fn describe_grid(name: &str, grid: &ParamGrid) -> String {
    format!(
        "{name} ({} angles x {} ratios x {} ranges)",
        grid.alphas.len(),
        grid.lambdas.len(),
        grid.thetas.len()
    )
}

fn load_estimators(methods: &[Method], nf: Option<&Path>, nv: Option<&Path>) -> CliResult<Estimators> {
    let mut est = Estimators::default();
    for &m in methods {
        let (slot, path, kind) = match m {
            Method::Ml => continue,
            Method::Nf => (&mut est.nf, nf, EstimatorKind::Nf),
            Method::Nv => (&mut est.nv, nv, EstimatorKind::Nv),
        };
        let path = path.ok_or_else(|| Failure::Usage(format!("method {m} needs a model file")))?;
        let art = ModelArtifact::load(path)?;
        if art.kind != kind {
            return Err(Failure::Usage(format!(
                "{} holds an {} model, not {}",
                path.display(),
                art.kind.name(),
                kind.name()
            )));
        }
        *slot = Some(art);
    }
    Ok(est)
}

fn estimate_csv(rec: &EstimateRecord) -> String {
    format!(
        "alpha,lambda,theta,sigma2,converged,out_of_domain\n{},{},{},{},{},{}\n",
        rec.alpha,
        rec.lambda,
        rec.theta,
        rec.sigma2.map(|s| s.to_string()).unwrap_or_default(),
        u8::from(rec.converged),
        u8::from(rec.out_of_domain)
    )
}

fn shape_text(s: LayerShape) -> String {
    match s {
        LayerShape::Image {
            height,
            width,
            channels,
        } => format!("[-, {height}, {width}, {channels}]"),
        LayerShape::Flat(n) => format!("[-, {n}]"),
    }
}

fn inspect(art: &ModelArtifact) -> CliResult<String> {
    let spec = art.network.spec();
    let shapes = spec.output_shapes()?;
    let counts = spec.layer_param_counts()?;
    let mut out = format!("model: {} (input {})\n", art.kind.name(), art.kind.input_tag());
    out.push_str("layer,type,output_shape,filters,kernel,activation,parameters\n");
    for (i, ((layer, shape), count)) in spec.layers.iter().zip(&shapes).zip(&counts).enumerate() {
        let (kind, filters, kernel, act) = match *layer {
            LayerSpec::Conv2d {
                filters,
                kernel,
                activation,
            } => (
                "conv2d",
                filters.to_string(),
                format!("{kernel}x{kernel}"),
                format!("{activation:?}").to_lowercase(),
            ),
            LayerSpec::Flatten => ("flatten", String::new(), String::new(), String::new()),
            LayerSpec::Dense { activation, .. } => ("dense", String::new(), String::new(), format!("{activation:?}").to_lowercase()),
        };
        out.push_str(&format!(
            "{},{kind},\"{}\",{filters},{kernel},{act},{count}\n",
            i + 1,
            shape_text(*shape)
        ));
    }
    out.push_str(&format!("total,,,,,,{}\n", counts.iter().sum::<usize>()));
    let m = &art.manifest;
    out.push_str(&format!(
        "# trained on {} samples ({} held out), {} epochs, batch {}, seed {}, final loss {}\n# data: {} (dataset seed {})\n",
        m.train_samples, m.validation_samples, m.config.epochs, m.config.batch_size, m.config.seed, m.final_loss, m.grid, m.dataset_seed
    ));
    Ok(out)
}
