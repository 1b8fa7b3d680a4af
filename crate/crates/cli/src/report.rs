//! Exit-code classification and key:value output helpers.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::Context;

/// Failures that are not I/O or format problems.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Validation(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Validation(m) => write!(f, "validation failed: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Failure::Usage(msg.into()).into()
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => EXIT_USAGE,
                Failure::Validation(_) => EXIT_VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<flame_core::Error>() {
            use flame_core::Error as E;
            return match e {
                E::Config(_) | E::Shape(_) | E::Domain(_) => EXIT_USAGE,
                E::Load(_) | E::Format(_) | E::Parse { .. } | E::Io { .. } => EXIT_IO,
            };
        }
    }
    EXIT_IO
}

/// Ordered `key: value` lines.
#[derive(Debug, Default)]
pub struct Kv {
    lines: Vec<(String, String)>,
}

impl Kv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }
}

pub fn print_config(kv: &Kv) {
    for line in kv.render().lines() {
        println!("config.{line}");
    }
}

pub fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).map_err(|e| flame_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}
