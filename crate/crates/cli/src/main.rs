use clap::Parser;

use abstain_cli::{run, Cli, Command};

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Perturb(_) => "perturb",
        Command::Annotate(_) => "annotate",
        Command::Select(_) => "select",
        Command::Eval(_) => "eval",
        Command::Report(_) => "report",
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        let summary = serde_json::json!({
            "status": "error",
            "command": command_name(&cli.command),
            "error": e.to_string(),
            "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
        });
        eprintln!("{summary}");
        std::process::exit(1);
    }
}
