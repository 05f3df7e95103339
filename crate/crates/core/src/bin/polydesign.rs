use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use polydesign::certify;
use polydesign::error::{Error, Result};
use polydesign::moments::MomentSequence;
use polydesign::pipeline::{self, Outcome, Problem, ProblemFile, RecoveryRecord, SolveRecord};

#[derive(Parser)]
#[command(
    name = "polydesign",
    version,
    about = "Approximate optimal designs for polynomial regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the moment relaxation and write solve.json.
    Solve(Common),
    /// Recover atoms and weights from solve.json and write design.json.
    Recover(Common),
    /// Check the equivalence theorem for design.json and write certificate.json.
    Certify(Common),
    /// Write p* on a regular grid to levelset.csv.
    Levelset {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
    /// Run all stages and write result.json.
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    problem: Option<PathBuf>,
    /// Built-in example problem on a preset design space.
    #[arg(long)]
    preset: Option<String>,
    /// Regression degree overriding the preset default.
    #[arg(long, requires = "preset")]
    degree: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampling and randomized steps.
    #[arg(long)]
    seed: Option<u64>,
    /// Compare the design with the tabulated one of the preset.
    #[arg(long)]
    check: bool,
    /// Write the relaxation to sdp.json and, in SDPA format, sdp.dat-s.
    #[arg(long)]
    dump_sdp: bool,
}

impl Common {
    fn load(&self) -> Result<(ProblemFile, Problem, PathBuf)> {
        let mut file = match (&self.problem, &self.preset) {
            (Some(path), _) => pipeline::read_json::<ProblemFile>(path)?,
            (None, Some(name)) => ProblemFile::preset(name, self.degree)?,
            (None, None) => return Err(Error::InvalidInput("either --problem or --preset is required".into())),
        };
        if let Some(seed) = self.seed {
            file.seed = seed;
        }
        let out = self
            .out
            .clone()
            .or_else(|| file.outputs.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out)?;
        let problem = file.resolve()?;
        if self.dump_sdp {
            pipeline::write_json(&out.join("sdp.json"), &pipeline::dump_sdp(&problem)?)?;
            std::fs::write(out.join("sdp.dat-s"), pipeline::dump_sdpa(&problem)?)?;
        }
        Ok((file, problem, out))
    }
}

fn read_y_star(out: &Path) -> Result<MomentSequence> {
    Ok(pipeline::read_json::<SolveRecord>(&out.join("solve.json"))?.y_star)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(c) => {
            let (_, problem, out) = c.load()?;
            let res = pipeline::run_solve(&problem)?;
            pipeline::write_json(&out.join("solve.json"), &SolveRecord::from_result(&res))?;
            Ok(0)
        }
        Command::Recover(c) => {
            let (_, problem, out) = c.load()?;
            let rec = pipeline::run_recover(&problem, &read_y_star(&out)?)?;
            pipeline::write_json(&out.join("design.json"), &rec)?;
            Ok(if rec.design.is_some() {
                0
            } else {
                Outcome::RankNeverFlat.exit_code()
            })
        }
        Command::Certify(c) => {
            let (file, problem, out) = c.load()?;
            let y = read_y_star(&out)?;
            let rec: RecoveryRecord = pipeline::read_json(&out.join("design.json"))?;
            let Some(design) = rec.design() else {
                return Ok(Outcome::RankNeverFlat.exit_code());
            };
            let report = pipeline::run_certify(&problem, &y, &design, None)?;
            pipeline::write_json(&out.join("certificate.json"), &report)?;
            let mut passed = report.passed;
            if c.check {
                if let Some(g) = problem
                    .preset
                    .as_deref()
                    .and_then(|p| pipeline::golden_design(p, file.regression.d))
                {
                    let cmp = pipeline::compare_with_golden(&design, &g, pipeline::GOLDEN_TOL);
                    pipeline::write_json(&out.join("check.json"), &cmp)?;
                    passed &= cmp.passed;
                }
            }
            Ok(if passed {
                0
            } else {
                Outcome::CertificationFailed.exit_code()
            })
        }
        Command::Levelset { common, resolution } => {
            let (_, problem, out) = common.load()?;
            let y = read_y_star(&out)?;
            let cfg = &problem.relaxation;
            let grid = certify::levelset_grid(&y, &problem.set, &cfg.basis, cfg.criterion, resolution)?;
            grid.write_csv(BufWriter::new(File::create(out.join("levelset.csv"))?))?;
            Ok(0)
        }
        Command::Pipeline(c) => {
            let (file, problem, out) = c.load()?;
            let result = pipeline::run_pipeline(&file, c.check)?;
            pipeline::write_json(&out.join("solve.json"), &result.solve)?;
            pipeline::write_json(&out.join("design.json"), &result.recovery)?;
            if let Some(cert) = &result.certificate {
                pipeline::write_json(&out.join("certificate.json"), cert)?;
            }
            if let Some(res) = file.outputs.levelset_resolution {
                if (1..=3).contains(&problem.set.n()) {
                    let cfg = &problem.relaxation;
                    let grid =
                        certify::levelset_grid(&result.solve.y_star, &problem.set, &cfg.basis, cfg.criterion, res)?;
                    grid.write_csv(BufWriter::new(File::create(out.join("levelset.csv"))?))?;
                }
            }
            pipeline::write_json(&out.join("result.json"), &result)?;
            Ok(result.exit_code())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let mut obj = json!({"error": e.kind(), "message": e.to_string()});
            if let Error::Parse { location, .. } = &e {
                obj["location"] = json!(location);
            }
            eprintln!("{obj}");
            ExitCode::from(1)
        }
    }
}
