//! `axfault`: train, quantize and fault-sweep int8 MLPs on simulated
//! approximate systolic arrays.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};

use axfault_core::arith::{characterize, resolve_multiplier, save_lut, MultiplierModel, SURROGATE_NAMES};
use axfault_core::data::{load_split, results_to_csv, write_results, Dataset, DatasetName, Split, SweepResult};
use axfault_core::energy::{estimate_energy, EnergyTable};
use axfault_core::fault::{FaultScope, FaultSite, FaultType};
use axfault_core::qnn::{
    self, load_float_model, load_quant_model, save_float_model, save_quant_model, ArchSpec, QuantModel, TrainConfig,
};
use axfault_core::sweep::{self, ReportKind, SweepGrid, SweepInputs};
use axfault_core::{Error, Result, SystolicConfig};

use config::ConfigFile;

#[derive(Parser, Debug)]
#[command(
    name = "axfault",
    version,
    about = "Fault-injection simulator for approximate int8 DNN accelerators"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// key = value file supplying defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root holding <dataset>/{train,t10k}-{images-idx3,labels-idx1}-ubyte.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Where trained and quantized models are stored.
    #[arg(long, global = true)]
    model_dir: Option<PathBuf>,
    /// Directory of <name>.lut product tables; built-in surrogates otherwise.
    #[arg(long, global = true)]
    lut_dir: Option<PathBuf>,
    /// Energy table file; the built-in table otherwise.
    #[arg(long, global = true)]
    energy_table: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a float model on a dataset's training split.
    Train(TrainArgs),
    /// Quantize a trained model to int8.
    Quantize(QuantizeArgs),
    /// Exhaustive error statistics of multipliers.
    Characterize(CharacterizeArgs),
    /// Classify test images, optionally under one stuck-at fault.
    Infer(InferArgs),
    /// Evaluate a grid of multipliers and faults.
    Sweep(SweepArgs),
    /// Turn a results file into plot-ready CSV.
    Report(ReportArgs),
    /// Write product tables for built-in multipliers.
    GenLut(GenLutArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    dataset: Option<DatasetName>,
    /// 1 = tanh hidden layers, 2 = sigmoid.
    #[arg(long)]
    arch: Option<u8>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training images held out to check the accuracy floor.
    #[arg(long)]
    holdout: Option<usize>,
    /// Minimum held-out accuracy (percent).
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct QuantizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Training images used to calibrate activation scales.
    #[arg(long)]
    calib: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CharacterizeArgs {
    /// Multipliers to characterize (default: all built-in ones).
    #[arg(long, value_delimiter = ',')]
    multiplier: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FaultArgs {
    #[arg(long)]
    fault: Option<FaultType>,
    #[arg(long)]
    bit: Option<u8>,
    #[arg(long)]
    layer: Option<usize>,
    /// `all` or `pe:R,C`.
    #[arg(long)]
    scope: Option<FaultScope>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    multiplier: Option<String>,
    #[command(flatten)]
    fault: FaultArgs,
    /// Evaluate this many test images drawn with --seed (default: all).
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the result as a one-row results CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    dataset: Vec<DatasetName>,
    #[arg(long, value_delimiter = ',')]
    arch: Vec<u8>,
    #[arg(long, value_delimiter = ',')]
    multiplier: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    fault: Vec<FaultType>,
    #[arg(long, value_delimiter = ',')]
    bit: Vec<u8>,
    #[arg(long, value_delimiter = ',')]
    layer: Vec<usize>,
    #[arg(long)]
    scope: Option<FaultScope>,
    #[arg(long)]
    subset: Option<usize>,
    /// Both datasets and architectures, all 16 bits, whole test sets.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Results CSV written by `sweep`.
    results: PathBuf,
    /// bitwise, layerwise or tradeoff.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenLutArgs {
    /// Multipliers to tabulate (default: accurate and every surrogate).
    #[arg(long, value_delimiter = ',')]
    multiplier: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status: 2 for invocation and configuration problems, 3 for bad data.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Internal(_) => 1,
        e if e.is_data_error() => 3,
        Error::DegenerateScale(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("axfault: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Every long flag name, which doubles as the set of config keys.
fn config_keys() -> Vec<String> {
    let cmd = Cli::command();
    let mut keys: Vec<String> = cmd
        .get_arguments()
        .chain(cmd.get_subcommands().flat_map(|s| s.get_arguments()))
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|k| k != "config")
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

/// Command-line flags merged with the optional config file.
struct Ctx {
    cfg: ConfigFile,
    data_dir: PathBuf,
    model_dir: PathBuf,
    lut_dir: Option<PathBuf>,
    energy_table: Option<PathBuf>,
    workers: Option<usize>,
}

impl Ctx {
    fn new(common: Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(path) => ConfigFile::load(path, &config_keys())?,
            None => ConfigFile::default(),
        };
        Ok(Ctx {
            data_dir: cfg.pick(common.data_dir, "data-dir")?.unwrap_or_else(|| "data".into()),
            model_dir: cfg
                .pick(common.model_dir, "model-dir")?
                .unwrap_or_else(|| "models".into()),
            lut_dir: cfg.pick(common.lut_dir, "lut-dir")?,
            energy_table: cfg.pick(common.energy_table, "energy-table")?,
            workers: cfg.pick(common.workers, "workers")?,
            cfg,
        })
    }

    fn model(&self, args: ModelArgs) -> Result<(DatasetName, u8)> {
        let dataset = self.cfg.pick(args.dataset, "dataset")?.unwrap_or(DatasetName::Mnist);
        let arch = self.cfg.pick(args.arch, "arch")?.unwrap_or(1);
        ArchSpec::reference(dataset, arch).map_err(|e| Error::Config(e.to_string()))?;
        Ok((dataset, arch))
    }

    fn float_path(&self, ds: DatasetName, arch: u8) -> PathBuf {
        self.model_dir.join(format!("{ds}-arch{arch}.float.axdn"))
    }

    fn quant_path(&self, ds: DatasetName, arch: u8) -> PathBuf {
        self.model_dir.join(format!("{ds}-arch{arch}.int8.axdn"))
    }

    fn load_quant(&self, ds: DatasetName, arch: u8) -> Result<QuantModel> {
        let path = self.quant_path(ds, arch);
        if !path.exists() {
            return Err(Error::Config(format!(
                "no quantized model at {}; run `axfault train` and `axfault quantize` first",
                path.display()
            )));
        }
        load_quant_model(&path)
    }

    fn dataset(&self, ds: DatasetName, split: Split) -> Result<Dataset> {
        load_split(&self.data_dir, ds, split)
    }

    fn multiplier(&self, name: &str) -> Result<MultiplierModel> {
        resolve_multiplier(name, self.lut_dir.as_deref())
    }

    fn energy(&self) -> Result<EnergyTable> {
        match &self.energy_table {
            Some(p) => EnergyTable::load(p),
            None => Ok(EnergyTable::shipped()),
        }
    }

    fn pool(&self) -> Result<rayon_pool::Pool> {
        rayon_pool::Pool::new(self.workers)
    }
}

/// Output to a file when a path is given, else stdout.
fn emit(out: Option<&Path>, text: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            }
            fs::write(path, text).map_err(|e| io_error(path, e))
        }
        None => std::io::stdout()
            .write_all(text)
            .map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.common)?;
    match cli.command {
        Command::Train(a) => train(&ctx, a),
        Command::Quantize(a) => quantize(&ctx, a),
        Command::Characterize(a) => characterize_cmd(&ctx, a),
        Command::Infer(a) => infer(&ctx, a),
        Command::Sweep(a) => sweep_cmd(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::GenLut(a) => gen_lut(&ctx, a),
    }
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let (ds, arch) = ctx.model(a.model)?;
    let c = &ctx.cfg;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        epochs: c.pick(a.epochs, "epochs")?.unwrap_or(d.epochs),
        batch_size: c.pick(a.batch_size, "batch-size")?.unwrap_or(d.batch_size),
        learning_rate: c.pick(a.lr, "lr")?.unwrap_or(d.learning_rate),
        momentum: c.pick(a.momentum, "momentum")?.unwrap_or(d.momentum),
        holdout: c.pick(a.holdout, "holdout")?.unwrap_or(d.holdout),
        accuracy_floor: c.pick(a.floor, "floor")?.unwrap_or(d.accuracy_floor),
    };
    let seed = c.pick(a.seed, "seed")?.unwrap_or(0);
    let out = c.pick(a.out, "out")?.unwrap_or_else(|| ctx.float_path(ds, arch));

    let train_set = ctx.dataset(ds, Split::Train)?;
    let test_set = ctx.dataset(ds, Split::Test)?;
    let spec = ArchSpec::reference(ds, arch)?;
    eprintln!(
        "training {ds} arch {arch}: {spec}, {} images, seed {seed}",
        train_set.len()
    );
    let start = Instant::now();
    let model = ctx.pool()?.install(|| {
        qnn::train_with_progress(
            spec,
            train_set.float_images().view(),
            &train_set.labels,
            &tc,
            seed,
            |s| {
                eprintln!(
                    "epoch {:>3}  loss {:.4}  ({:.1?})",
                    s.epoch,
                    s.mean_loss,
                    start.elapsed()
                )
            },
        )
    })?;
    let acc = model.accuracy(test_set.float_images().view(), &test_set.labels);
    save_float_model(&model, &out)?;
    println!("float test accuracy {acc:.2}%  -> {}", out.display());
    Ok(())
}

fn quantize(ctx: &Ctx, a: QuantizeArgs) -> Result<()> {
    let (ds, arch) = ctx.model(a.model)?;
    let calib = ctx.cfg.pick(a.calib, "calib")?.unwrap_or(1000);
    let out = ctx.cfg.pick(a.out, "out")?.unwrap_or_else(|| ctx.quant_path(ds, arch));
    let src = ctx.float_path(ds, arch);
    if !src.exists() {
        return Err(Error::Config(format!(
            "no trained model at {}; run `axfault train` first",
            src.display()
        )));
    }
    let model = load_float_model(&src)?;
    let train_set = ctx.dataset(ds, Split::Train)?;
    if calib == 0 || calib > train_set.len() {
        return Err(Error::Config(format!(
            "calibration needs 1..={} images, got {calib}",
            train_set.len()
        )));
    }
    let qm = qnn::quantize(&model, train_set.head(calib).float_images().view())?;
    save_quant_model(&qm, &out)?;
    for (i, l) in qm.layers.iter().enumerate() {
        println!(
            "layer {}  weight scale {:.6e}  input scale {:.6e}",
            i + 1,
            l.weight_scale,
            l.input_scale
        );
    }
    let test_set = ctx.dataset(ds, Split::Test)?;
    let res = ctx.pool()?.install(|| {
        qnn::infer(
            &qm,
            test_set.images(),
            &test_set.labels,
            &MultiplierModel::Accurate,
            None,
        )
    })?;
    println!("int8 test accuracy {:.2}%  -> {}", res.accuracy, out.display());
    Ok(())
}

fn builtin_names() -> Vec<String> {
    std::iter::once("accurate")
        .chain(SURROGATE_NAMES)
        .map(str::to_string)
        .collect()
}

fn characterize_cmd(ctx: &Ctx, a: CharacterizeArgs) -> Result<()> {
    let names = ctx
        .cfg
        .pick_list(a.multiplier, "multiplier")?
        .unwrap_or_else(builtin_names);
    let out = ctx.cfg.pick(a.out, "out")?;
    let mut text = String::from("multiplier,mae_percent,max_abs_error,error_rate\n");
    for name in names {
        let m = ctx.multiplier(&name)?;
        let s = characterize(&m);
        text.push_str(&format!(
            "{name},{},{},{}\n",
            s.mae_percent, s.max_abs_error, s.error_rate
        ));
    }
    emit(out.as_deref(), text.as_bytes())
}

fn infer(ctx: &Ctx, a: InferArgs) -> Result<()> {
    let c = &ctx.cfg;
    let (ds, arch) = ctx.model(a.model)?;
    let name = c.pick(a.multiplier, "multiplier")?.unwrap_or_else(|| "accurate".into());
    let fault_type = c.pick(a.fault.fault, "fault")?;
    let bit = c.pick(a.fault.bit, "bit")?;
    let layer = c.pick(a.fault.layer, "layer")?;
    let scope = c
        .pick(a.fault.scope, "scope")?
        .unwrap_or(FaultScope::AllMultiplications);
    let fault = match (fault_type, bit, layer) {
        (Some(t), Some(b), Some(l)) => Some(FaultSite::new(t, b, l, scope).map_err(|e| Error::Config(e.to_string()))?),
        (None, None, None) => None,
        _ => return Err(Error::Config("--fault, --bit and --layer go together".into())),
    };
    let subset = c.pick(a.subset, "subset")?;
    let seed = c.pick(a.seed, "seed")?.unwrap_or(0);
    let out = c.pick(a.out, "out")?;

    let qm = ctx.load_quant(ds, arch)?;
    let model = ctx.multiplier(&name)?;
    let table = ctx.energy()?;
    let test_set = ctx.dataset(ds, Split::Test)?;
    let data = match subset {
        Some(n) if n == 0 || n > test_set.len() => {
            return Err(Error::Config(format!("subset must be 1..={}", test_set.len())))
        }
        Some(n) => test_set.sample(n, seed)?,
        None => test_set,
    };
    if let Some(f) = &fault {
        let cfg = SystolicConfig::default();
        f.validate(qm.spec.num_layers(), cfg.rows, cfg.cols)
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let energy_j = estimate_energy(&qm, &name, &table, data.len() as u64)?;
    let pool = ctx.pool()?;
    let run = |f: Option<&FaultSite>| pool.install(|| qnn::infer(&qm, data.images(), &data.labels, &model, f));
    let start = Instant::now();
    let clean = run(None)?;
    let result = match &fault {
        Some(f) => run(Some(f))?,
        None => clean.clone(),
    };
    let row = SweepResult {
        dataset: ds,
        arch,
        multiplier: name.clone(),
        fault_type: fault.map(|f| f.fault_type()),
        bit: fault.map(|f| f.bit()),
        layer: fault.map(|f| f.layer()),
        accuracy: result.accuracy,
        accuracy_loss: qnn::accuracy_loss(clean.accuracy, result.accuracy),
        energy_j,
        images: data.len(),
    };
    eprintln!(
        "{ds} arch {arch} {name} {}: accuracy {:.2}% (fault-free {:.2}%), {} images, {:.3e} J, {:.1?}",
        fault.map_or_else(|| "no fault".to_string(), |f| f.to_string()),
        result.accuracy,
        clean.accuracy,
        data.len(),
        energy_j,
        start.elapsed()
    );
    emit(out.as_deref(), &results_to_csv(&[row])?)
}

fn sweep_cmd(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let c = &ctx.cfg;
    let base = if c.switch(a.full, "full")? {
        SweepGrid::full()
    } else {
        SweepGrid::desk()
    };
    let grid = SweepGrid {
        datasets: c.pick_list(a.dataset, "dataset")?.unwrap_or(base.datasets),
        archs: c.pick_list(a.arch, "arch")?.unwrap_or(base.archs),
        multipliers: c.pick_list(a.multiplier, "multiplier")?.unwrap_or(base.multipliers),
        fault_types: c.pick_list(a.fault, "fault")?.unwrap_or(base.fault_types),
        bits: c.pick_list(a.bit, "bit")?.unwrap_or(base.bits),
        layers: c.pick_list(a.layer, "layer")?.unwrap_or(base.layers),
        scope: c.pick(a.scope, "scope")?.unwrap_or(base.scope),
        subset: c.pick(a.subset, "subset")?.or(base.subset),
        seed: c.pick(a.seed, "seed")?.unwrap_or(base.seed),
    };
    let out = c.pick(a.out, "out")?;
    grid.validate()?;

    // Resolve everything up front so a bad grid fails before any inference.
    let mut multipliers = BTreeMap::new();
    for name in &grid.multipliers {
        multipliers.insert(name.clone(), ctx.multiplier(name)?);
    }
    let energy = ctx.energy()?;
    let mut models = BTreeMap::new();
    for &ds in &grid.datasets {
        for &arch in &grid.archs {
            models.insert((ds, arch), ctx.load_quant(ds, arch)?);
        }
    }
    let mut test_sets = BTreeMap::new();
    for &ds in &grid.datasets {
        test_sets.insert(ds, ctx.dataset(ds, Split::Test)?);
    }
    let inputs = SweepInputs {
        models,
        test_sets,
        multipliers,
        energy,
        array: SystolicConfig::default(),
    };
    eprintln!(
        "sweep: {} fault points + {} baselines",
        grid.fault_points(),
        grid.baseline_points()
    );
    let start = Instant::now();
    let rows = sweep::run_sweep(&grid, &inputs, ctx.workers)?;
    eprintln!("sweep finished in {:.1?}", start.elapsed());
    match out {
        Some(path) => write_results(&rows, path),
        None => emit(None, &results_to_csv(&rows)?),
    }
}

fn report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let kind: ReportKind = ctx
        .cfg
        .pick(a.kind, "kind")?
        .ok_or_else(|| Error::Config("--kind is required (bitwise, layerwise or tradeoff)".into()))?
        .parse()?;
    let out = ctx.cfg.pick(a.out, "out")?;
    let rows = axfault_core::data::read_results(&a.results)?;
    let table = match kind {
        ReportKind::Tradeoff => Some(ctx.energy()?),
        _ => None,
    };
    let text = sweep::report(&rows, kind, table.as_ref())?;
    emit(out.as_deref(), text.as_bytes())
}

fn gen_lut(ctx: &Ctx, a: GenLutArgs) -> Result<()> {
    let names = ctx
        .cfg
        .pick_list(a.multiplier, "multiplier")?
        .unwrap_or_else(builtin_names);
    let dir = ctx.cfg.pick(a.out, "out")?.unwrap_or_else(|| "luts".into());
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    for name in names {
        // Always tabulate the built-in definition, never a file from --lut-dir.
        let model = resolve_multiplier(&name, None)?;
        let path = dir.join(format!("{name}.lut"));
        save_lut(&model, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

/// A rayon pool sized by `--workers`.
mod rayon_pool {
    use axfault_core::{Error, Result};

    pub struct Pool(rayon::ThreadPool);

    impl Pool {
        pub fn new(workers: Option<usize>) -> Result<Self> {
            let mut b = rayon::ThreadPoolBuilder::new();
            if let Some(n) = workers {
                b = b.num_threads(n.max(1));
            }
            b.build().map(Pool).map_err(|e| Error::Internal(e.to_string()))
        }

        pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
            self.0.install(f)
        }
    }
}
