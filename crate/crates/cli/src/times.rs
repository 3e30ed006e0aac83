//! Clock times given as `HH:MM` or decimal hours.

use anyhow::{bail, Context, Result};

pub fn parse_time(text: &str) -> Result<f64> {
    let text = text.trim();
    let hours = if let Some((h, m)) = text.split_once(':') {
        let h: u32 = h.parse().with_context(|| format!("bad hour in `{text}`"))?;
        let m: u32 = m.parse().with_context(|| format!("bad minute in `{text}`"))?;
        if m >= 60 {
            bail!("minutes must be below 60 in `{text}`");
        }
        h as f64 + m as f64 / 60.0
    } else {
        text.parse::<f64>()
            .with_context(|| format!("`{text}` is neither HH:MM nor decimal hours"))?
    };
    if !hours.is_finite() || hours < 0.0 {
        bail!("time `{text}` must be a non-negative number of hours");
    }
    Ok(hours)
}

/// Comma-separated list of times.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_time)
        .collect()
}

/// File-name label such as `03h43`, rounded to the minute.
pub fn label(hours: f64) -> String {
    let minutes = (hours * 60.0).round() as u64;
    format!("{:02}h{:02}", minutes / 60, minutes % 60)
}
