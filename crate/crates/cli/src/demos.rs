//! Canned configurations shipped with the binary.

use std::path::Path;

use crate::config::{parse_config, ConfigError};
use crate::run::{run, CliError, RunOutputs};

pub const DEMOS: [(&str, &str); 5] = [
    ("scalar", include_str!("../demos/scalar.toml")),
    ("pure-delay", include_str!("../demos/pure-delay.toml")),
    ("chirp", include_str!("../demos/chirp.toml")),
    ("spikes", include_str!("../demos/spikes.toml")),
    ("constant-g", include_str!("../demos/constant-g.toml")),
];

pub fn demo_config(name: &str) -> Result<&'static str, ConfigError> {
    DEMOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text).ok_or_else(|| ConfigError {
        key: "demo".into(),
        line: None,
        message: format!(
            "unknown demo `{name}`; valid: {}",
            DEMOS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ),
    })
}

pub fn run_demo(name: &str, out_dir: &Path) -> Result<RunOutputs, CliError> {
    let cfg = parse_config(demo_config(name)?, Path::new("."))?;
    run(&cfg, out_dir)
}
