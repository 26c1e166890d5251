//! Embedded per-element data: atomic masses and CPK display colors.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const MASSES: &str = include_str!("../data/atomic_masses.txt");
const COLORS: &str = include_str!("../data/cpk_colors.txt");

/// Color of elements missing from the CPK table.
pub const FALLBACK_COLOR: &str = "#FF1493";

fn table(text: &'static str) -> HashMap<&'static str, &'static str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .filter_map(|l| l.split_once(char::is_whitespace))
        .map(|(k, v)| (k, v.trim()))
        .collect()
}

fn masses() -> &'static HashMap<&'static str, f64> {
    static M: OnceLock<HashMap<&'static str, f64>> = OnceLock::new();
    M.get_or_init(|| {
        table(MASSES)
            .into_iter()
            .map(|(k, v)| (k, v.parse().expect("embedded mass table is valid")))
            .collect()
    })
}

fn colors() -> &'static HashMap<&'static str, &'static str> {
    static C: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    C.get_or_init(|| table(COLORS))
}

/// Standard atomic weight in amu.
pub fn mass(symbol: &str) -> Result<f64> {
    masses()
        .get(symbol)
        .copied()
        .ok_or_else(|| Error::UnknownElement(symbol.to_string()))
}

/// CPK color as `#RRGGBB`.
pub fn cpk_color(symbol: &str) -> String {
    colors()
        .get(symbol)
        .map(|c| format!("#{c}"))
        .unwrap_or_else(|| FALLBACK_COLOR.to_string())
}
