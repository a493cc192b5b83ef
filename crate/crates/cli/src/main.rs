mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use swimbladder::phantom::CohortShape;
use swimbladder::preprocessing::Orientation;

use config::{FileConfig, Overrides, Settings};

#[derive(Debug, Parser)]
#[command(name = "sbdetect", version, about = "Swim bladder detection in fish embryo images")]
struct Cli {
    /// Settings file of `key = value` lines; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// ROI diameter in pixels.
    #[arg(long, global = true)]
    roi_diameter: Option<usize>,
    /// Innermost radius the contour may take.
    #[arg(long, global = true)]
    r_min: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort with masks and a manifest.
    PhantomGen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CohortShape::SCREENING.with_dorsal)]
        with_dorsal: usize,
        #[arg(long, default_value_t = CohortShape::SCREENING.with_lateral)]
        with_lateral: usize,
        #[arg(long, default_value_t = CohortShape::SCREENING.without_dorsal)]
        without_dorsal: usize,
        #[arg(long, default_value_t = CohortShape::SCREENING.without_lateral)]
        without_lateral: usize,
    },
    /// Build a median-image / probability-map atlas from healthy embryos.
    BuildAtlas {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        orientation: Orientation,
        #[arg(long, default_value_t = 0)]
        fixed_index: usize,
        /// Directory of `<id>_bladder.png` masks overriding the manifest.
        #[arg(long)]
        masks_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize and segment the swim bladder of every manifest image.
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        atlas_dorsal: Option<PathBuf>,
        #[arg(long)]
        atlas_lateral: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write overlay and polar images.
        #[arg(long)]
        overlays: bool,
    },
    /// Compute the descriptor CSV from segmented shapes.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        shapes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a random forest on a labelled feature CSV.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify the rows of a feature CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified k-fold cross-validation report.
    Crossval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<commands::Failures> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let folds = match &cli.command {
        Command::Crossval { k, .. } => *k,
        _ => None,
    };
    let settings = Settings::resolve(
        &file,
        &Overrides {
            seed: cli.seed,
            jobs: cli.jobs,
            roi_diameter: cli.roi_diameter,
            r_min: cli.r_min,
            folds,
        },
    )?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = settings.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build()?;
    pool.install(|| match &cli.command {
        Command::PhantomGen {
            out,
            with_dorsal,
            with_lateral,
            without_dorsal,
            without_lateral,
        } => commands::phantom_gen(
            &settings,
            CohortShape {
                with_dorsal: *with_dorsal,
                with_lateral: *with_lateral,
                without_dorsal: *without_dorsal,
                without_lateral: *without_lateral,
            },
            out,
        ),
        Command::BuildAtlas {
            manifest,
            orientation,
            fixed_index,
            masks_dir,
            out,
        } => commands::build_atlas_cmd(&settings, manifest, *orientation, *fixed_index, masks_dir.as_deref(), out),
        Command::Segment {
            manifest,
            atlas_dorsal,
            atlas_lateral,
            out,
            overlays,
        } => commands::segment_cmd(
            &settings,
            manifest,
            atlas_dorsal.as_deref(),
            atlas_lateral.as_deref(),
            out,
            *overlays,
        ),
        Command::Features { manifest, shapes, out } => commands::features_cmd(&settings, manifest, shapes, out),
        Command::Train { features, out } => commands::train_cmd(&settings, features, out),
        Command::Predict { model, features, out } => commands::predict_cmd(model, features, out),
        Command::Crossval { features, out, .. } => commands::crossval_cmd(&settings, features, out),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
