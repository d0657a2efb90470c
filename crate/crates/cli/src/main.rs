mod commands;
mod config;
mod report;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, ConfigError, Format, Settings};

fn run(cli: Cli) -> anyhow::Result<bool> {
    let name = cli.command.name();
    let mut settings = Settings::new(name, cli.config.as_deref())?;
    settings.flag("seed", cli.seed.map(|s| s as i64));
    if cli.seed.is_some_and(|s| s > i64::MAX as u64) {
        return config::config_error("seed must fit in 63 bits");
    }
    let seed = settings.u64_required("seed")?;
    settings.flag("format", cli.format.map(|f| f.extension()));
    let format = match settings.string("format", "csv")?.as_str() {
        "csv" => Format::Csv,
        "json" => Format::Json,
        other => return config::config_error(format!("unknown format `{other}` (csv or json)")),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build()?;
    let report = pool.install(|| commands::run(&cli.command, &mut settings, seed))?;
    let bytes = report.render(format)?;
    let dest = report::destination(cli.output, name, format);
    report::write(&bytes, dest.as_ref())?;
    for c in report.checks.iter().filter(|c| !c.passed) {
        let kind = if c.advisory { "advisory" } else { "violated" };
        eprintln!("{kind}: {}", c.tag);
    }
    Ok(!report.violated())
}

fn is_input_error(e: &anyhow::Error) -> bool {
    use moelab_core::Error as E;
    e.downcast_ref::<ConfigError>().is_some()
        || matches!(
            e.downcast_ref::<E>(),
            Some(E::InvalidDimension(_) | E::DimensionMismatch { .. } | E::Precondition(_) | E::UnsupportedDimension(_))
        )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if is_input_error(&e) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
