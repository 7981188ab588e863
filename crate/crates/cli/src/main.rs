use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use merge_limits::experiments::{
    self, emit_report, plot_svg, read_json_report, render_csv, ExperimentConfig, KinematicsReport, Report,
    ReportFormat, RhtStudyReport, SaturationReport, Series, SubspaceStudy, WidthReport,
};
use merge_limits::merge::{merge_linear, MergeWeights};
use merge_limits::rht::{apply_rht, tail_diagnostics};
use merge_limits::subspace::{pca_explained, sv_tail_stats, write_bands_csv, SvSource};
use merge_limits::tensor_io::{read_matrix, read_pvec, write_matrix, write_pvec};
use merge_limits::{Error, Result, RngStream};

#[derive(Parser)]
#[command(name = "merge-limits", version, about = "Experiments on the limits of linear model merging")]
struct Cli {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write N correlated experts as .mmpv files (or low-rank factors as .mmmx).
    GenExperts {
        #[arg(long)]
        low_rank: bool,
    },
    /// Convex combination of parameter vectors.
    Merge {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Comma-separated weights; uniform when omitted.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Apply the RHT transform to a parameter vector.
    Rht {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Partial Gaussian widths and marginal gains of the configured task.
    Width,
    /// Random-rotation intersection sweep.
    Kinematics,
    /// Merged variance, loss, width and termination for n = 1..N.
    Saturate,
    /// Baseline vs RHT loss curves and the coverage pair.
    RhtStudy,
    /// PCA and singular-value bands of generated experts or a stacked matrix.
    Subspace {
        /// Matrix file with one expert per row.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Re-render a JSON report as CSV and SVG next to it.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(format!("--threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    let format: ReportFormat = cli.format.parse()?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out)?;

    match cli.command {
        Command::GenExperts { low_rank } => {
            if low_rank {
                for (i, d) in experiments::gen_low_rank_experts(&cfg)?.iter().enumerate() {
                    let left = scaled_left(d);
                    let (l, r) = (out.join(format!("expert_{i:03}.left.mmmx")), out.join(format!("expert_{i:03}.right.mmmx")));
                    write_matrix(&left, &l)?;
                    write_matrix(d.right(), &r)?;
                    println!("{}\n{}", l.display(), r.display());
                }
            } else {
                for (i, e) in experiments::gen_experts(&cfg)?.iter().enumerate() {
                    let p = out.join(format!("expert_{i:03}.mmpv"));
                    write_pvec(e, &p)?;
                    println!("{}", p.display());
                }
            }
        }
        Command::Merge { inputs, weights, output } => {
            let experts = inputs.iter().map(read_pvec).collect::<Result<Vec<_>>>()?;
            let w = match weights {
                Some(w) => MergeWeights::new(w)?,
                None => MergeWeights::uniform(experts.len()),
            };
            let merged = merge_linear(&experts, &w)?;
            let p = output.unwrap_or_else(|| out.join("merged.mmpv"));
            write_pvec(&merged, &p)?;
            println!("{}", p.display());
        }
        Command::Rht { input, output } => {
            let w = read_pvec(&input)?;
            let t = apply_rht(&w, &cfg.rht, RngStream::new(cfg.seed, 0))?;
            let p = output.unwrap_or_else(|| out.join("rht.mmpv"));
            write_pvec(&t, &p)?;
            println!("{}", p.display());
            if t.dim() >= 10_000 {
                let tails = tail_diagnostics(t.as_slice(), cfg.tail_fraction, None)?;
                println!(
                    "excess_kurtosis {} hill_exponent {} (stderr {})",
                    tails.excess_kurtosis, tails.hill_exponent.mean, tails.hill_exponent.stderr
                );
            }
        }
        Command::Width => {
            let r = experiments::run_width(&cfg)?;
            finish(&r, &cfg, format, &out, "width", width_series(&r))?;
        }
        Command::Kinematics => {
            let r = experiments::run_kinematics(&cfg.kinematics, cfg.seed)?;
            finish(&r, &cfg, format, &out, "kinematics", kinematics_series(&r))?;
        }
        Command::Saturate => {
            let r = experiments::run_saturation(&cfg)?;
            finish(&r, &cfg, format, &out, "saturation", saturation_series(&r))?;
        }
        Command::RhtStudy => {
            let r = experiments::run_rht_study(&cfg)?;
            println!(
                "C1 {} (stderr {})  C2 {} (stderr {})  C2 > C1: {}",
                r.coverage_baseline.proxy.mean,
                r.coverage_baseline.proxy.stderr,
                r.coverage_rht.proxy.mean,
                r.coverage_rht.proxy.stderr,
                r.c2_greater
            );
            finish(&r, &cfg, format, &out, "rht-study", rht_series(&r))?;
        }
        Command::Subspace { input } => match input {
            Some(path) => {
                let m = read_matrix(&path)?;
                let spectrum = pca_explained(&m, cfg.center_pca)?;
                let bands = sv_tail_stats(SvSource::Dense(&m));
                let mut f = std::fs::File::create(out.join("spectrum.csv"))?;
                merge_limits::subspace::write_spectrum_csv(&spectrum, &mut f)?;
                let mut f = std::fs::File::create(out.join("bands.csv"))?;
                write_bands_csv(&bands, &mut f)?;
                println!("{}\n{}", out.join("spectrum.csv").display(), out.join("bands.csv").display());
            }
            None => {
                let r = experiments::run_subspace(&cfg)?;
                let mut f = std::fs::File::create(out.join("bands.csv"))?;
                write_bands_csv(&r.first_expert_bands, &mut f)?;
                let series = vec![Series {
                    name: "cumulative explained".into(),
                    points: r
                        .spectrum
                        .explained_fractions
                        .iter()
                        .scan(0.0, |acc, f| {
                            *acc += f;
                            Some(*acc)
                        })
                        .enumerate()
                        .map(|(i, c)| ((i + 1) as f64, c))
                        .collect(),
                }];
                finish(&r, &cfg, format, &out, "subspace", series)?;
            }
        },
        Command::Report { input } => rerender(&input)?,
    }
    Ok(())
}

fn scaled_left(d: &merge_limits::LowRankDelta) -> merge_limits::DenseMatrix {
    let s = d.scale();
    let l = d.left();
    merge_limits::DenseMatrix::from_fn(l.rows(), l.cols(), |i, j| s * l.get(i, j))
}

fn finish<R: Report + Clone>(
    r: &R,
    cfg: &ExperimentConfig,
    format: ReportFormat,
    out: &Path,
    stem: &str,
    series: Vec<Series>,
) -> Result<()> {
    let ext = match format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    };
    let path = out.join(format!("{stem}.{ext}"));
    emit_report(r, cfg, format, &path)?;
    println!("{}", path.display());
    if series.iter().any(|s| !s.points.is_empty()) {
        let svg = out.join(format!("{stem}.svg"));
        plot_svg(&series, &svg)?;
        println!("{}", svg.display());
    }
    Ok(())
}

fn width_series(r: &WidthReport) -> Vec<Series> {
    vec![Series { name: "jensen width".into(), points: r.rows.iter().map(|x| (x.m as f64, x.width_jensen)).collect() }]
}

fn kinematics_series(r: &KinematicsReport) -> Vec<Series> {
    vec![Series { name: "P(intersect)".into(), points: r.rows.iter().map(|x| (x.k as f64, x.probability)).collect() }]
}

fn saturation_series(r: &SaturationReport) -> Vec<Series> {
    vec![
        Series { name: "variance (analytic)".into(), points: r.rows.iter().map(|x| (x.n as f64, x.variance_analytic)).collect() },
        Series { name: "variance (MC)".into(), points: r.rows.iter().map(|x| (x.n as f64, x.variance_mc.mean)).collect() },
        Series { name: "limit".into(), points: r.rows.iter().map(|x| (x.n as f64, r.variance_limit)).collect() },
    ]
}

fn rht_series(r: &RhtStudyReport) -> Vec<Series> {
    vec![
        Series { name: "loss baseline".into(), points: r.rows.iter().map(|x| (x.n as f64, x.loss_baseline)).collect() },
        Series { name: "loss RHT".into(), points: r.rows.iter().map(|x| (x.n as f64, x.loss_rht)).collect() },
    ]
}

fn rerender(input: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or_default().to_string();
    let csv = input.with_extension("csv");
    let svg = input.with_extension("svg");
    let (body, series) = match kind.as_str() {
        "saturation" => {
            let r = read_json_report::<SaturationReport>(input)?.report;
            (render_csv(&r), saturation_series(&r))
        }
        "kinematics" => {
            let r = read_json_report::<KinematicsReport>(input)?.report;
            (render_csv(&r), kinematics_series(&r))
        }
        "rht-study" => {
            let r = read_json_report::<RhtStudyReport>(input)?.report;
            (render_csv(&r), rht_series(&r))
        }
        "width" => {
            let r = read_json_report::<WidthReport>(input)?.report;
            (render_csv(&r), width_series(&r))
        }
        "subspace" => {
            let r = read_json_report::<SubspaceStudy>(input)?.report;
            (render_csv(&r), Vec::new())
        }
        other => return Err(Error::Argument(format!("unknown report kind {other:?}"))),
    };
    std::fs::write(&csv, body)?;
    println!("{}", csv.display());
    if !series.is_empty() {
        plot_svg(&series, &svg)?;
        println!("{}", svg.display());
    }
    Ok(())
}
