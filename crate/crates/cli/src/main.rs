mod args;
mod commands;
mod error;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, ReplayArgs};
use commands::{canonicalize_inputs, execute, input_paths, Artifact, Inputs};
use error::{CliError, CliResult};
use manifest::RunManifest;

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_stdout(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io("<stdout>", e))
}

fn emit(art: &Artifact, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, &art.main)?,
        None => write_stdout(&art.main)?,
    }
    for (path, text) in &art.side {
        write_file(path, text)?;
    }
    Ok(())
}

fn manifest_path(out: Option<&Path>, explicit: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        out.map(|p| {
            let mut s = p.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

fn run_command(mut cmd: Command) -> CliResult<()> {
    canonicalize_inputs(&mut cmd)?;
    let inputs = Inputs::load(&input_paths(&cmd))?;
    let art = execute(&cmd, &inputs)?;
    let output = cmd.output_mut().expect("not a replay").clone();
    emit(&art, output.out.as_deref())?;

    let manifest = RunManifest::new(&cmd, &inputs).to_json();
    match manifest_path(output.out.as_deref(), output.manifest.as_deref()) {
        Some(p) => write_file(&p, &manifest),
        None => {
            eprint!("{manifest}");
            Ok(())
        }
    }
}

fn replay(a: &ReplayArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.manifest_path).map_err(|e| CliError::io(&a.manifest_path, e))?;
    let m = RunManifest::parse(&text)?;
    let inputs = m.load_inputs()?;
    let art = execute(&m.params, &inputs)?;
    if let Some(path) = &a.verify {
        let want = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        if want != art.main.as_bytes() {
            return Err(CliError::Mismatch(format!("{}: artifact differs from replay", path.display())));
        }
    }
    if a.verify.is_none() || a.out.is_some() {
        emit(&art, a.out.as_deref())?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    match cli.command {
        Command::Replay(a) => replay(&a),
        cmd => run_command(cmd),
    }
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
