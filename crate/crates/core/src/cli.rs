//! Command-line interface: compile, quantize, plan, simulate, compare,
//! report.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or validation
//! errors. All outputs are written atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::executor::{self, Features};
use crate::graph::{self, Bundle, LayerSpec, ModelGraph};
use crate::layout::{self, DEFAULT_RING_ENGINES};
use crate::dsfp::FormatParams;
use crate::{perf, surgery, Error};

#[derive(Debug, Parser)]
#[command(
    name = "dsa-forge",
    about = "Compiler and functional simulator for a 3x3-convolution-only CNN accelerator",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pass {
    Shortcut,
    Dws,
    Fc,
    Compress,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rewrite composite layers into the 3x3-only dialect
    Lower {
        /// Input model manifest (.json)
        model: PathBuf,
        /// Output model manifest path
        #[arg(short, long)]
        output: PathBuf,
        /// Run a single pass instead of the full pipeline
        #[arg(long, value_enum)]
        pass: Option<Pass>,
        /// Layer index the pass applies to (required for compress)
        #[arg(long)]
        layer: Option<usize>,
        /// Output channels to keep (compress only)
        #[arg(long)]
        k: Option<usize>,
    },
    /// Encode a lowered model's weights into the accelerator's formats
    Quantize {
        /// Input model manifest (.json)
        model: PathBuf,
        /// Output bundle manifest path
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 12)]
        act_bias: i32,
        #[arg(long, default_value_t = 14)]
        coef_bias: i32,
    },
    /// Emit the per-layer engine/rotation layout plan and coverage report
    Plan {
        /// Bundle manifest (.json)
        bundle: PathBuf,
        /// Engines in the ring
        #[arg(long, default_value_t = DEFAULT_RING_ENGINES)]
        ne: usize,
        /// Output plan text file
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run inference on one image
    Run {
        /// Bundle manifest (.json)
        bundle: PathBuf,
        /// Image file: PGM (P5), PPM (P6), or raw tensor with a shape header
        image: PathBuf,
        /// Run the double-precision reference path instead of the simulator
        #[arg(long)]
        reference: bool,
        /// Output feature dump path
        #[arg(short, long)]
        output: PathBuf,
        /// Worker threads over tiles (results are bit-identical)
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Compare two feature dumps
    Compare { a: PathBuf, b: PathBuf },
    /// Print the analytic performance and size report
    Perf {
        /// Model manifest (.json)
        model: PathBuf,
        /// Clock frequency in Hz
        #[arg(long, default_value_t = 66e6)]
        freq: f64,
        /// Power draw in Watts (worst-case default; the bench measured 0.1356)
        #[arg(long, default_value_t = perf::WORST_CASE_WATTS)]
        watts: f64,
        /// Emit machine-readable JSON instead of the text table
        #[arg(long)]
        json: bool,
    },
}

enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

/// Parses arguments from the environment and runs; returns the process
/// exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_float(path: &Path) -> Result<ModelGraph, CliError> {
    match graph::load_model(path, None)? {
        Bundle::Float(g) => Ok(g),
        Bundle::Quantized(_) => Err(CliError::Data(Error::Bundle(
            "expected a float model, got a quantized bundle".into(),
        ))),
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Lower {
            model,
            output,
            pass,
            layer,
            k,
        } => {
            let g = load_float(&model)?;
            let (lowered, rewrites) = match pass {
                None => {
                    if layer.is_some() || k.is_some() {
                        return Err(CliError::Usage(
                            "--layer and --k require --pass".into(),
                        ));
                    }
                    surgery::lower_all(&g)?
                }
                Some(Pass::Compress) => {
                    let layer = layer.ok_or_else(|| {
                        CliError::Usage("--pass compress requires --layer".into())
                    })?;
                    let k = k.ok_or_else(|| {
                        CliError::Usage("--pass compress requires --k".into())
                    })?;
                    let out = surgery::compress_channels(&g, layer, k)?;
                    let dropped = g.layers.len() - out.layers.len();
                    let rewrites = vec![surgery::Rewrite {
                        layer,
                        description: format!(
                            "kept first {k} output channels; removed {dropped} dense consumer(s)"
                        ),
                    }];
                    (out, rewrites)
                }
                Some(p) => {
                    if k.is_some() {
                        return Err(CliError::Usage("--k only applies to compress".into()));
                    }
                    apply_single_pass(&g, p, layer)?
                }
            };
            graph::save_model(&lowered, &output)?;
            if rewrites.is_empty() {
                println!("no rewrites: model is already in the 3x3 dialect");
            }
            for r in &rewrites {
                println!("layer {}: {}", r.layer, r.description);
            }
            println!(
                "wrote {} ({} layers)",
                output.display(),
                lowered.layers.len()
            );
            Ok(())
        }
        Command::Quantize {
            model,
            output,
            act_bias,
            coef_bias,
        } => {
            let g = load_float(&model)?;
            let params = FormatParams { act_bias, coef_bias };
            let qm = graph::quantize_model(&g, params)?;
            graph::save_quant_model(&qm, &output)?;
            println!(
                "wrote {} ({} layers, act_bias {}, coef_bias {})",
                output.display(),
                qm.layers.len(),
                act_bias,
                coef_bias
            );
            Ok(())
        }
        Command::Plan { bundle, ne, output } => {
            let loaded = graph::load_model(&bundle, None)?;
            let layer_dims: Vec<(usize, usize)> = match &loaded {
                Bundle::Quantized(m) => m
                    .layers
                    .iter()
                    .map(|l| (l.kernels.in_channels, l.kernels.out_channels))
                    .collect(),
                Bundle::Float(g) => {
                    if !g.is_vgg_type() {
                        return Err(CliError::Data(Error::Bundle(
                            "planning needs a lowered (3x3-only) model".into(),
                        )));
                    }
                    g.layers
                        .iter()
                        .map(|l| (l.in_channels(), l.out_channels()))
                        .collect()
                }
            };
            let mut text = String::new();
            for (idx, (nim, nf)) in layer_dims.iter().enumerate() {
                let plan = layout::plan_layout(*nim, *nf, ne)?;
                let coverage = layout::coverage_check(&plan);
                let _ = writeln!(text, "# layer {idx}");
                text.push_str(&plan.dump());
                text.push_str(&coverage.summary());
                text.push('\n');
                print!("layer {idx}: {}", coverage.summary());
                if !coverage.is_clean() {
                    return Err(CliError::Data(Error::Layout(format!(
                        "layer {idx} schedule failed its coverage check"
                    ))));
                }
            }
            graph::write_atomic(&output, text.as_bytes())?;
            println!("wrote {}", output.display());
            Ok(())
        }
        Command::Run {
            bundle,
            image,
            reference,
            output,
            threads,
        } => {
            if threads == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            let loaded = graph::load_model(&bundle, None)?;
            let input = executor::load_image(&image, loaded.input_scale())?;
            let features = if reference {
                let g = match &loaded {
                    Bundle::Float(g) => g.clone(),
                    Bundle::Quantized(m) => m.to_reference(),
                };
                Features::Real(executor::run_reference(&g, &input)?)
            } else {
                let Bundle::Quantized(m) = &loaded else {
                    return Err(CliError::Data(Error::Bundle(
                        "bundle is not quantized; run `quantize` first or pass --reference"
                            .into(),
                    )));
                };
                let map = executor::run_quantized(m, &input, threads)?;
                Features::Quantized {
                    map,
                    act_bias: m.params.act_bias,
                }
            };
            executor::write_features(&output, &features)?;
            print_feature_summary(&features);
            println!("wrote {}", output.display());
            Ok(())
        }
        Command::Compare { a, b } => {
            let fa = executor::read_features(&a)?.to_real();
            let fb = executor::read_features(&b)?.to_real();
            let report = executor::compare(&fa, &fb)?;
            println!("shape: {}x{}x{}", fa.channels, fa.height, fa.width);
            println!("max_abs: {}", report.max_abs);
            println!("max_rel: {}", report.max_rel);
            println!("mean_abs: {}", report.mean_abs);
            if let Some(agree) = report.argmax_agree {
                println!("argmax: {}", if agree { "agree" } else { "DISAGREE" });
            }
            Ok(())
        }
        Command::Perf {
            model,
            freq,
            watts,
            json,
        } => {
            let g = match graph::load_model(&model, None)? {
                Bundle::Float(g) => g,
                Bundle::Quantized(m) => m.to_reference(),
            };
            let report = perf::report(&g, freq, watts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
            } else {
                print!("{}", report.text_table());
            }
            Ok(())
        }
    }
}

fn apply_single_pass(
    g: &ModelGraph,
    pass: Pass,
    target: Option<usize>,
) -> Result<(ModelGraph, Vec<surgery::Rewrite>), CliError> {
    let matches_pass = |l: &LayerSpec| match pass {
        Pass::Shortcut => matches!(l, LayerSpec::ShortcutBlock { .. }),
        Pass::Dws => matches!(l, LayerSpec::DepthwiseSeparable { .. }),
        Pass::Fc => matches!(l, LayerSpec::FCHead { .. }),
        Pass::Compress => unreachable!("compress is handled separately"),
    };
    if let Some(idx) = target {
        let Some(layer) = g.layers.get(idx) else {
            return Err(CliError::Data(Error::Validation {
                layer: idx,
                msg: "layer index out of range".into(),
            }));
        };
        if !matches_pass(layer) {
            return Err(CliError::Data(Error::Validation {
                layer: idx,
                msg: format!("layer is {}, not a {:?} target", layer.kind_name(), pass),
            }));
        }
    }

    let mut layers = Vec::with_capacity(g.layers.len());
    let mut rewrites = Vec::new();
    for (idx, layer) in g.layers.iter().enumerate() {
        let selected = matches_pass(layer) && target.is_none_or(|t| t == idx);
        if !selected {
            layers.push(layer.clone());
            continue;
        }
        let lowered = match layer {
            LayerSpec::ShortcutBlock { w1, w2 } => surgery::lower_shortcut(w1, w2)?,
            LayerSpec::DepthwiseSeparable {
                depthwise,
                pointwise,
                out_channels,
            } => surgery::lower_depthwise_separable(depthwise, pointwise, *out_channels)?,
            LayerSpec::FCHead {
                spatial,
                in_channels,
                hidden,
                out_dim,
                weights,
            } => surgery::lower_fc_head(
                *spatial,
                *in_channels,
                hidden,
                *out_dim,
                weights.as_deref(),
            )?,
            _ => unreachable!("filtered by matches_pass"),
        };
        rewrites.push(surgery::Rewrite {
            layer: idx,
            description: format!(
                "{} -> {} conv3x3 layers",
                layer.kind_name(),
                lowered.len()
            ),
        });
        layers.extend(lowered);
    }
    let out = ModelGraph {
        input_shape: g.input_shape,
        layers,
        params: g.params,
        input_scale: g.input_scale,
    };
    out.validate()?;
    Ok((out, rewrites))
}

fn print_feature_summary(features: &Features) {
    let fm = features.to_real();
    let kind = match features {
        Features::Quantized { .. } => "quantized",
        Features::Real(_) => "reference",
    };
    let (min, max) = fm
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    println!(
        "{kind} features: {}x{}x{} values in [{min}, {max}]",
        fm.channels, fm.height, fm.width
    );
    if fm.height == 1 && fm.width == 1 && fm.channels > 1 {
        let argmax = fm
            .values
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.partial_cmp(y).expect("finite"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        println!("argmax: channel {argmax}");
    }
}
