//! Plain-text model files.
//!
//! ```text
//! # two-state chain
//! alphabet_size = 2
//! order = 1
//! kernel =
//!   0.7 0.3
//!   0.2 0.8
//! initial = 0.4 0.6
//! ```
//!
//! * Blank lines and text after `#` are ignored.
//! * `alphabet_size` and `order` are required and must appear before `kernel`.
//! * `kernel =` is followed by exactly `m^order` lines, one per context in
//!   index order (most recent symbol least significant), each holding `m`
//!   whitespace-separated probabilities.
//! * `initial =` is optional and holds `m^order` probabilities on one line.
//!   When absent the stationary law is used.

use super::{Alphabet, MarkovModel};
use crate::error::{Error, Result};

pub fn parse_model(text: &str) -> Result<MarkovModel> {
    let mut alphabet_size: Option<usize> = None;
    let mut order: Option<usize> = None;
    let mut kernel: Option<Vec<f64>> = None;
    let mut initial: Option<Vec<f64>> = None;

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    while let Some((line_no, line)) = lines.next() {
        let (key, value) = line
            .split_once('=')
            .ok_or(Error::Parse { line: line_no, message: format!("expected `key = value`, got `{line}`") })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "alphabet_size" => alphabet_size = Some(parse_int(value, line_no)?),
            "order" => order = Some(parse_int(value, line_no)?),
            "kernel" => {
                if !value.is_empty() {
                    return Err(parse_err(line_no, "kernel rows start on the next line"));
                }
                let (m, r) = match (alphabet_size, order) {
                    (Some(m), Some(r)) => (m, r),
                    _ => return Err(parse_err(line_no, "alphabet_size and order must precede kernel")),
                };
                let rows = Alphabet::new(m)?.contexts(r)? as usize;
                let mut table = Vec::with_capacity(rows * m);
                for row in 0..rows {
                    let (row_line, text) = lines
                        .next()
                        .ok_or_else(|| parse_err(line_no, &format!("kernel ended after {row} of {rows} rows")))?;
                    let values = parse_floats(text, row_line)?;
                    if values.len() != m {
                        return Err(parse_err(
                            row_line,
                            &format!("kernel row has {} entries, expected {m}", values.len()),
                        ));
                    }
                    table.extend(values);
                }
                kernel = Some(table);
            }
            "initial" => initial = Some(parse_floats(value, line_no)?),
            other => return Err(parse_err(line_no, &format!("unknown key `{other}`"))),
        }
    }

    let m = alphabet_size.ok_or_else(|| parse_err(0, "missing alphabet_size"))?;
    let r = order.ok_or_else(|| parse_err(0, "missing order"))?;
    let kernel = kernel.ok_or_else(|| parse_err(0, "missing kernel"))?;
    MarkovModel::new(Alphabet::new(m)?, r, kernel, initial)
}

/// Writes a model in the format read by [`parse_model`]. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn format_model(model: &MarkovModel) -> String {
    let m = model.alphabet_size();
    let mut out = format!("alphabet_size = {m}\norder = {}\nkernel =\n", model.order());
    for row in model.kernel().chunks(m) {
        let cells: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str("  ");
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    let init: Vec<String> = model.initial().iter().map(|p| p.to_string()).collect();
    out.push_str("initial = ");
    out.push_str(&init.join(" "));
    out.push('\n');
    out
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse { line, message: message.to_string() }
}

fn parse_int(value: &str, line: usize) -> Result<usize> {
    value.parse().map_err(|_| parse_err(line, &format!("`{value}` is not a nonnegative integer")))
}

fn parse_floats(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, &format!("`{t}` is not a number"))))
        .collect()
}
