//! `lst2d` — reproducible training, evaluation, quantization and hardware
//! export for the separable-transform MNIST models.
//!
//! Results go to stdout, progress and diagnostics to stderr. The zero-flag
//! defaults are the reference protocol (300 epochs, batch 1000, Adam 2e-3,
//! weight decay 1e-5), so `lst2d train --model lst1` reproduces the headline
//! model end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lst2d_core::mnist::{self, Dataset};
use lst2d_core::train::write_history_csv;
use lst2d_core::{
    evaluate, evaluate_quantized, export_roms, gradient_check, infer_staged, init_params,
    load_model, quantize_model, save_model, train, write_test_vectors, EpochStats, Matrix,
    ModelSpec, QuantizedModel, Real, SplitMix64, TrainConfig, IMAGE_SIDE,
};

#[derive(Parser)]
#[command(
    name = "lst2d",
    version,
    about = "Separable-transform MNIST models: \
train, evaluate, quantize to Q5.7, and export ROM images for hardware verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the model file plus an epoch-history CSV
    Train(TrainArgs),
    /// Evaluate a saved model on the 10 000-image test split
    Eval(EvalArgs),
    /// Quantize a float model to Q5.7 and report the accuracy delta
    Quantize(QuantizeArgs),
    /// Write per-processing-element ROM hex files and a test-vector file
    ExportRom(ExportRomArgs),
    /// Classify a single image file (IDX container or raw 784 bytes)
    Predict(PredictArgs),
    /// Compare analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
    /// Print the learnable-parameter count of a model
    Paramcount(ParamcountArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Args)]
struct DataDirArg {
    /// Directory holding the four canonical MNIST IDX files
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// lst1, lst2, reslst3, or ffnn:<w0>-<w1>-... (e.g. ffnn:784-12-10)
    #[arg(long, default_value = "lst1")]
    model: String,
    #[command(flatten)]
    data: DataDirArg,
    /// Where the model file and history CSV are written
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    batch_size: u32,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    weight_decay: f64,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
}

#[derive(Args)]
struct EvalArgs {
    /// A model file written by `train` (or `quantize` with --quantized)
    #[arg(long)]
    model_path: PathBuf,
    #[command(flatten)]
    data: DataDirArg,
    /// Evaluate the Q5.7 fixed-point datapath instead of the float model
    #[arg(long)]
    quantized: bool,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
}

#[derive(Args)]
struct QuantizeArgs {
    /// The float model file to quantize
    #[arg(long)]
    model_path: PathBuf,
    #[command(flatten)]
    data: DataDirArg,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExportRomArgs {
    /// A quantized model file; a float model file is quantized on the fly
    #[arg(long)]
    model_path: PathBuf,
    #[command(flatten)]
    data: DataDirArg,
    /// Where the .hex files and test_vectors.txt are written
    #[arg(long, default_value = "rom")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// The image to classify: an IDX images container (first image is
    /// used) or exactly 784 raw pixel bytes, row-major
    image: PathBuf,
    #[arg(long)]
    model_path: PathBuf,
    /// Classify through the Q5.7 datapath (model file must be quantized)
    #[arg(long)]
    quantized: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value = "lst1")]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ParamcountArgs {
    #[arg(long)]
    model: String,
}

type Result<T> = std::result::Result<T, lst2d_core::Error>;

fn percent(fraction: f64) -> String {
    format!("{:.2}%", 100.0 * fraction)
}

fn progress_line(total: usize) -> impl FnMut(&EpochStats) {
    move |s: &EpochStats| {
        eprintln!(
            "epoch {:3}/{total}  loss {:.4}  test accuracy {}",
            s.epoch,
            s.mean_train_loss,
            percent(s.test_accuracy)
        );
    }
}

fn model_file_stem(name: &str) -> String {
    name.replace(':', "_")
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    match a.precision {
        Precision::F32 => run_train::<f32>(a),
        Precision::F64 => run_train::<f64>(a),
    }
}

fn run_train<T: Real>(a: &TrainArgs) -> Result<()> {
    let spec = ModelSpec::by_name(&a.model)?;
    let cfg = TrainConfig {
        epochs: a.epochs as usize,
        batch_size: a.batch_size as usize,
        lr: a.lr,
        weight_decay: a.weight_decay,
        seed: a.seed,
    };
    let ds_train: Dataset<T> = mnist::load_train(&a.data.data_dir)?;
    let ds_test: Dataset<T> = mnist::load_test(&a.data.data_dir)?;
    let (params, history) = train(&spec, &ds_train, &ds_test, &cfg, progress_line(cfg.epochs))?;

    fs::create_dir_all(&a.out_dir)?;
    let stem = model_file_stem(&spec.name);
    let model_path = a.out_dir.join(format!("{stem}.lst"));
    let csv_path = a.out_dir.join(format!("{stem}_history.csv"));
    save_model(&spec, &params, &model_path)?;
    write_history_csv(&csv_path, &history)?;

    println!(
        "final test accuracy: {}",
        percent(history.last().unwrap().test_accuracy)
    );
    println!("model: {}", model_path.display());
    println!("history: {}", csv_path.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    if a.quantized {
        let qm = QuantizedModel::load(&a.model_path)?;
        let ds_test: Dataset<f64> = mnist::load_test(&a.data.data_dir)?;
        let (acc, stats) = evaluate_quantized(&qm, &ds_test)?;
        println!("test accuracy: {}", percent(acc));
        println!("params: {}", qm.spec.param_count()?);
        eprintln!(
            "saturated {} of {} MAC rescales ({:.4}%)",
            stats.saturated,
            stats.macs,
            100.0 * stats.fraction()
        );
        return Ok(());
    }
    match a.precision {
        Precision::F32 => run_eval::<f32>(a),
        Precision::F64 => run_eval::<f64>(a),
    }
}

fn run_eval<T: Real>(a: &EvalArgs) -> Result<()> {
    let (spec, params) = load_model::<T>(&a.model_path)?;
    let ds_test: Dataset<T> = mnist::load_test(&a.data.data_dir)?;
    let acc = evaluate(&spec, &params, &ds_test)?;
    println!("test accuracy: {}", percent(acc));
    println!("params: {}", spec.param_count()?);
    Ok(())
}

fn cmd_quantize(a: &QuantizeArgs) -> Result<()> {
    let (spec, params) = load_model::<f64>(&a.model_path)?;
    let (qm, quant_stats) = quantize_model(&spec, &params)?;

    fs::create_dir_all(&a.out_dir)?;
    let out_path = a
        .out_dir
        .join(format!("{}_q57.lsq", model_file_stem(&spec.name)));
    qm.save(&out_path)?;

    let ds_test: Dataset<f64> = mnist::load_test(&a.data.data_dir)?;
    let float_acc = evaluate(&spec, &params, &ds_test)?;
    let (fixed_acc, infer_stats) = evaluate_quantized(&qm, &ds_test)?;
    println!("float test accuracy: {}", percent(float_acc));
    println!("quantized test accuracy: {}", percent(fixed_acc));
    println!("delta: {:+.3} points", 100.0 * (fixed_acc - float_acc));
    println!("quantized model: {}", out_path.display());
    eprintln!(
        "{} of {} weights saturated during quantization; {} of {} MAC rescales saturated",
        quant_stats.saturated, quant_stats.total, infer_stats.saturated, infer_stats.macs
    );
    Ok(())
}

/// Accept either container flavor: a quantized file loads directly, a float
/// file is quantized in memory.
fn load_quantized_any(path: &Path) -> Result<QuantizedModel> {
    match QuantizedModel::load(path) {
        Ok(qm) => Ok(qm),
        Err(lst2d_core::Error::BadMagic { .. }) => {
            let (spec, params) = load_model::<f64>(path)?;
            Ok(quantize_model(&spec, &params)?.0)
        }
        Err(e) => Err(e),
    }
}

/// How many test images the export writes reference vectors for.
const TEST_VECTOR_COUNT: usize = 100;

fn cmd_export_rom(a: &ExportRomArgs) -> Result<()> {
    let qm = load_quantized_any(&a.model_path)?;
    let paths = export_roms(&qm, &a.out_dir)?;

    let ds_test: Dataset<f64> = mnist::load_test(&a.data.data_dir)?;
    let vectors_path = a.out_dir.join("test_vectors.txt");
    let sample = &ds_test.images[..TEST_VECTOR_COUNT.min(ds_test.len())];
    write_test_vectors(&qm, sample, &vectors_path)?;

    println!("wrote {} ROM files to {}", paths.len(), a.out_dir.display());
    println!(
        "wrote {} test vectors to {}",
        sample.len(),
        vectors_path.display()
    );
    Ok(())
}

/// Read one 28x28 image: an IDX images container (first image) or a raw
/// 784-byte dump, both row-major with pixels in 0..=255.
fn read_image(path: &Path) -> Result<Matrix<f64>> {
    let bytes = fs::read(path)?;
    let raw = match mnist::parse_idx_images(&bytes) {
        Ok(imgs) => {
            if imgs.count == 0 || imgs.rows != IMAGE_SIDE || imgs.cols != IMAGE_SIDE {
                return Err(lst2d_core::Error::ShapeMismatch(format!(
                    "need at least one {IMAGE_SIDE}x{IMAGE_SIDE} image, container holds {} of {}x{}",
                    imgs.count, imgs.rows, imgs.cols
                )));
            }
            imgs.pixels[..IMAGE_SIDE * IMAGE_SIDE].to_vec()
        }
        Err(lst2d_core::Error::BadMagic { .. }) => {
            if bytes.len() != IMAGE_SIDE * IMAGE_SIDE {
                return Err(lst2d_core::Error::ShapeMismatch(format!(
                    "raw image must be exactly {} bytes, got {}",
                    IMAGE_SIDE * IMAGE_SIDE,
                    bytes.len()
                )));
            }
            bytes
        }
        Err(e) => return Err(e),
    };
    let data = raw.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(Matrix::from_vec(IMAGE_SIDE, IMAGE_SIDE, data))
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let image = read_image(&a.image)?;
    let digit = if a.quantized {
        let qm = QuantizedModel::load(&a.model_path)?;
        infer_staged(&qm, &image)?.0
    } else {
        let (spec, params) = load_model::<f64>(&a.model_path)?;
        let logits = lst2d_core::model_forward(&spec, &params, &image)?;
        lst2d_core::argmax(&logits)
    };
    println!("{digit}");
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let spec = ModelSpec::by_name(&a.model)?;
    let params = init_params::<f64>(&spec, a.seed)?;
    let side = spec.input_side()?;

    let mut rng = SplitMix64::for_stream(a.seed, 0xFD);
    let images: Vec<Matrix<f64>> = (0..2)
        .map(|_| {
            Matrix::from_vec(
                side,
                side,
                (0..side * side).map(|_| rng.next_f64()).collect(),
            )
        })
        .collect();
    let batch = mnist::Minibatch {
        images: images.iter().collect(),
        labels: vec![3, 8],
    };

    let report = gradient_check(&spec, &params, &batch, 1e-5)?;
    println!(
        "max relative error: {:.3e} over {} parameters",
        report.max_rel_err, report.checked
    );
    if report.max_rel_err > 1e-5 {
        return Err(lst2d_core::Error::Invalid(format!(
            "gradient check failed: {:.3e} exceeds 1e-5",
            report.max_rel_err
        )));
    }
    Ok(())
}

fn cmd_paramcount(a: &ParamcountArgs) -> Result<()> {
    println!("{}", ModelSpec::by_name(&a.model)?.param_count()?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Quantize(a) => cmd_quantize(a),
        Command::ExportRom(a) => cmd_export_rom(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Paramcount(a) => cmd_paramcount(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
