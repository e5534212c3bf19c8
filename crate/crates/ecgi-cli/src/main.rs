use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ecgi::datagen::{generate_dataset, Dataset};
use ecgi::femcore::SpaceTimeField;
use ecgi::geometry::write_mesh;
use ecgi::harness::{
    denoise_bench, inverse_bench, plot_spacetime, refinement_study, train_model, BenchmarkConfig,
    ResultTable, Setup, StudyEnergy,
};
use ecgi::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ecgi-cli",
    version,
    about = "ECGI datasets, benchmarks and studies"
)]
struct Cli {
    /// `key = value` configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the torso mesh and electrodes and write them as text.
    Mesh,
    /// Simulate the synthetic dataset into the configured dataset directory.
    Datagen,
    /// Denoising benchmark over the configured noise levels.
    Denoise,
    /// Inverse benchmark over the configured SNR levels.
    Inverse,
    /// Both benchmarks plus a summary of method orderings.
    Eval,
    /// Energy differences of a smooth field under nested refinement.
    RefineStudy {
        #[arg(long, default_value_t = 32)]
        base_nodes: usize,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// SPSA training of the MFoE model on the training split.
    Train,
    /// Space-time plot of a stored field, or of the first test sample.
    Plot {
        #[arg(long)]
        field: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::ParameterOutOfRange(_) => 2,
        Error::CgDivergence { .. }
        | Error::NonFiniteObjective { .. }
        | Error::BlowUp { .. }
        | Error::SolveFailure(_)
        | Error::SingularSystem(_)
        | Error::ZeroIterate
        | Error::Ellipticity { .. } => 3,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<BenchmarkConfig> {
    let mut cfg = match &cli.config {
        Some(p) => BenchmarkConfig::read(p)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_table(t: &ResultTable, out: &Path, stem: &str) -> Result<()> {
    t.write(out, stem)?;
    print!("{}", t.to_text());
    Ok(())
}

/// One line per ordering `a ≤ b` at every level of the table.
fn orderings(t: &ResultTable, pairs: &[(&str, &str)]) -> String {
    let mut levels: Vec<f64> = t.rows.iter().map(|r| r.level).collect();
    levels.dedup();
    let mut s = String::new();
    for &(a, b) in pairs {
        for &l in &levels {
            if let (Some(ra), Some(rb)) = (t.row(l, a), t.row(l, b)) {
                let ok = ra.mean_error <= rb.mean_error;
                s += &format!(
                    "{} {}={l} {a} {:.6} <= {b} {:.6} {}\n",
                    t.level_name,
                    t.level_name,
                    ra.mean_error,
                    rb.mean_error,
                    if ok { "holds" } else { "violated" }
                );
            }
        }
    }
    s
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    fs::create_dir_all(&cfg.out)?;
    let setup = Setup::new(&cfg)?;
    let out = &cfg.out;
    match &cli.command {
        Command::Mesh => {
            write_mesh(&out.join("mesh.txt"), &setup.mesh, Some(&setup.electrodes))?;
            println!(
                "{} vertices, {} triangles, {} epicardial nodes, {} electrodes",
                setup.mesh.vertices.len(),
                setup.mesh.triangles.len(),
                setup.ctx.n_vertices(),
                setup.electrodes.len()
            );
        }
        Command::Datagen => {
            let split =
                generate_dataset(&cfg.dataset, &setup.generator()?, &setup.dataset_seeds())?;
            println!(
                "{} train, {} val, {} test samples in {}",
                split.train.len(),
                split.val.len(),
                split.test.len(),
                cfg.dataset.display()
            );
        }
        Command::Denoise => {
            let t = denoise_bench(&setup, &setup.load_dataset()?)?;
            write_table(&t, out, "denoise")?;
        }
        Command::Inverse => {
            let t = inverse_bench(&setup, &setup.load_dataset()?, &setup.forward_matrix()?)?;
            write_table(&t, out, "inverse")?;
        }
        Command::Eval => {
            let ds = setup.load_dataset()?;
            let d = denoise_bench(&setup, &ds)?;
            let i = inverse_bench(&setup, &ds, &setup.forward_matrix()?)?;
            write_table(&d, out, "denoise")?;
            write_table(&i, out, "inverse")?;
            let pairs = [("TV", "TIK"), ("CMFoE", "TV"), ("MFoE", "CMFoE")];
            let summary = orderings(&d, &pairs) + &orderings(&i, &pairs);
            fs::write(out.join("orderings.txt"), &summary)?;
            print!("{summary}");
        }
        Command::RefineStudy { base_nodes, levels } => {
            let (_, cmfoe) = setup.models()?;
            let grid = setup.ctx.grid.clone();
            let end = grid.end_time();
            let field = move |theta: f64, t: f64| theta.cos() + t / end;
            let r = cfg.mesh.heart_radius;
            let mut text = String::new();
            for (name, energy) in [
                ("CMFoE", StudyEnergy::Foe(cmfoe)),
                (
                    "TIK",
                    StudyEnergy::Tik {
                        lambda_gamma: 1.0,
                        lambda_t: 1.0,
                    },
                ),
            ] {
                let rep = refinement_study(&field, &energy, r, *base_nodes, *levels, &grid)?;
                text += &format!("# {name}\n{}", rep.to_text());
            }
            fs::write(out.join("refine.txt"), &text)?;
            print!("{text}");
        }
        Command::Train => {
            let (mfoe, _) = setup.models()?;
            let o = train_model(&setup, &setup.load_dataset()?, &mfoe)?;
            o.model.write(&out.join("mfoe.model"))?;
            let mut text = format!(
                "initial_loss {:e}\nbest_loss {:e}\n",
                o.initial_loss, o.best_loss
            );
            for (k, l) in o.loss_trace.iter().enumerate() {
                text += &format!("step {k} {l:e}\n");
            }
            fs::write(out.join("train.txt"), &text)?;
            print!("{text}");
        }
        Command::Plot { field } => {
            let (f, stem) = match field {
                Some(p) => (SpaceTimeField::read(p)?, p.file_stem().map(PathBuf::from)),
                None => {
                    let ds = Dataset::load(&cfg.dataset)?;
                    let s = *ds.split.test.first().ok_or_else(|| {
                        Error::MissingArtifacts("dataset has no test samples".into())
                    })?;
                    (
                        ds.samples[&s].clone(),
                        Some(PathBuf::from(format!("sample_{s:04}"))),
                    )
                }
            };
            let stem = out.join(stem.unwrap_or_else(|| PathBuf::from("field")));
            plot_spacetime(&f, &stem)?;
            println!("wrote {}.ppm and {}.csv", stem.display(), stem.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
