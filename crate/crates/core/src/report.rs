//! Deterministic report emission: ordered key=value lines and TSV
//! tables, byte-identical for identical configuration and seed.

use std::fmt::Write as _;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a float with 17 significant digits, enough to round-trip
/// f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Default)]
pub struct Report {
    out: String,
}

impl Report {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        let mut r = Report { out: String::new() };
        r.kv("tool", format!("abv {TOOL_VERSION}"));
        r.kv("subcommand", subcommand);
        r.kv("seed", seed);
        r
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.out, "{key}={value}").unwrap();
    }

    pub fn kv_f64(&mut self, key: &str, value: f64) {
        writeln!(self.out, "{key}={}", fmt_f64(value)).unwrap();
    }

    pub fn kv_bool(&mut self, key: &str, value: bool) {
        writeln!(self.out, "{key}={value}").unwrap();
    }

    /// TSV table header (prefixed with '#').
    pub fn table_header(&mut self, columns: &[&str]) {
        writeln!(self.out, "#{}", columns.join("\t")).unwrap();
    }

    pub fn table_row(&mut self, cells: &[f64]) {
        let row: Vec<String> = cells.iter().map(|c| fmt_f64(*c)).collect();
        writeln!(self.out, "{}", row.join("\t")).unwrap();
    }

    pub fn finish(self) -> String {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [1.0 / 3.0, 1e-300, -2.5e17, std::f64::consts::PI] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s}");
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let build = || {
            let mut r = Report::new("classify", 42);
            r.kv_f64("kappa1", 1.0 / 7.0);
            r.kv_bool("r_elliptic", true);
            r.table_header(&["eps", "value"]);
            r.table_row(&[0.1, 2.222222222222]);
            r.finish()
        };
        assert_eq!(build(), build());
    }
}
