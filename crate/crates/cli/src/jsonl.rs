//! JSON-lines plumbing with floats printed at 17 significant digits so
//! every f64 survives the text round trip bit-exactly.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{CliError, Result};

struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        // one leading digit + 16 fractional digits = 17 significant digits
        write!(writer, "{value:.16e}")
    }
}

/// Serialize one value as a JSON line with 17-significant-digit floats.
pub fn to_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Io(format!("serialize: {e}")))?;
    String::from_utf8(buf).map_err(|e| CliError::Io(format!("serialize: {e}")))
}

/// Parse one line, reporting the 1-based line number and the in-line offset
/// on failure.
pub fn from_line<T: serde::de::DeserializeOwned>(line: &str, line_no: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| {
        CliError::Validation(format!(
            "parse error at line {line_no}, column {}: {e}",
            e.column()
        ))
    })
}
