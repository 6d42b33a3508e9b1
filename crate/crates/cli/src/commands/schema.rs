//! `mmcl schema`: print the configuration schema.

use mmcl_core::Result;

use crate::config::SCHEMA;
use crate::fmt;

/// Prints the schema as JSON on stdout.
pub fn run() -> Result<i32> {
    print!("{}", fmt::to_json(&SCHEMA));
    Ok(0)
}
