use std::fmt;
use std::io;

use kcroute_core::Error;

pub const OK: u8 = 0;
pub const USAGE: u8 = 2;
pub const DEPENDENCY: u8 = 3;
pub const DATA: u8 = 4;

/// Bad flags, missing inputs or unreadable input files.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::EmbeddingUnavailable(_) | Error::TaggerUnavailable(_) | Error::TaggerParse(_) => DEPENDENCY,
        Error::InvalidLabel(_)
        | Error::InvalidConfig(_)
        | Error::Parse { .. }
        | Error::Range { .. }
        | Error::InvalidQuery(_)
        | Error::EmptyPool
        | Error::UnknownModel(_)
        | Error::AlphaMismatch { .. } => USAGE,
        Error::Io(io) => io_code(io),
        _ => DATA,
    }
}

fn io_code(e: &io::Error) -> u8 {
    match e.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => USAGE,
        _ => DATA,
    }
}

/// Maps the first classifiable cause to an exit code.
pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<io::Error>() {
            return io_code(e);
        }
    }
    DATA
}
