use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Criterion, GainTable, HrtfGain};
use crate::audio_io::write_atomic;
use crate::error::{Error, Result};
use crate::snr::SnrAxes;
use crate::spectral::BandPartition;

pub const MODEL_MAGIC: &str = "gaintab v1";

fn render(table: &GainTable, hrtf: &HrtfGain) -> Result<String> {
    table.validate()?;
    hrtf.validate()?;
    if table.noise_class.contains(['\n', '\r']) || table.noise_class.is_empty() {
        return Err(Error::invalid("noise class must be a non-empty single line"));
    }
    let a = &table.axes;
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC}");
    let _ = writeln!(s, "criterion={}", table.criterion);
    let _ = writeln!(s, "p={}", table.p);
    let _ = writeln!(s, "noise_class={}", table.noise_class);
    let _ = writeln!(s, "I={}", a.i);
    let _ = writeln!(s, "J={}", a.j);
    let _ = writeln!(s, "prior_db_min={}", a.prior_db_min);
    let _ = writeln!(s, "prior_db_max={}", a.prior_db_max);
    let _ = writeln!(s, "posterior_db_min={}", a.posterior_db_min);
    let _ = writeln!(s, "posterior_db_max={}", a.posterior_db_max);
    let _ = writeln!(s, "hrtf_model={}", hrtf.model_name());
    match hrtf {
        HrtfGain::Tdoa { h, tau_max } => {
            let _ = writeln!(s, "L={}", h.len());
            let _ = writeln!(s, "tau_max={tau_max}");
        }
        HrtfGain::Ipd { q, bands, .. } => {
            let _ = writeln!(s, "Q={q}");
            let _ = writeln!(s, "B={}", bands.num_bands());
            let edges: Vec<String> = bands.edges().iter().map(usize::to_string).collect();
            let _ = writeln!(s, "band_edges={}", edges.join(","));
        }
    }
    s.push('\n');
    for v in &table.values {
        let _ = writeln!(s, "{v:.16e}");
    }
    s.push('\n');
    for v in hrtf.values() {
        let _ = writeln!(s, "{v:.16e}");
    }
    Ok(s)
}

/// Writes a gain table and its HRTF gains as one text model file.
pub fn save_model(path: impl AsRef<Path>, table: &GainTable, hrtf: &HrtfGain) -> Result<()> {
    write_atomic(path, render(table, hrtf)?.as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(GainTable, HrtfGain)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|reason| Error::format(path, reason))
}

fn parse(text: &str) -> std::result::Result<(GainTable, HrtfGain), String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(MODEL_MAGIC) => {}
        Some(other) if other.starts_with("gaintab") => {
            return Err(format!("unsupported version '{other}'"));
        }
        _ => return Err(format!("missing '{MODEL_MAGIC}' header")),
    }
    let mut meta = BTreeMap::new();
    for line in lines.by_ref() {
        if line.trim().is_empty() {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got '{line}'"))?;
        meta.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| meta.get(k).ok_or_else(|| format!("missing key '{k}'"));
    let num = |k: &str| -> std::result::Result<f64, String> {
        get(k)?
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("key '{k}' is not a finite number"))
    };
    let int = |k: &str| -> std::result::Result<usize, String> {
        get(k)?
            .parse::<usize>()
            .map_err(|_| format!("key '{k}' is not a non-negative integer"))
    };

    let axes = SnrAxes {
        prior_db_min: num("prior_db_min")?,
        prior_db_max: num("prior_db_max")?,
        posterior_db_min: num("posterior_db_min")?,
        posterior_db_max: num("posterior_db_max")?,
        i: int("I")?,
        j: int("J")?,
    };
    axes.validate().map_err(|e| e.to_string())?;
    let criterion: Criterion = get("criterion")?.parse().map_err(|e: Error| e.to_string())?;

    let gains = read_block(&mut lines, axes.cells(), "gain")?;
    let hrtf = match get("hrtf_model")?.as_str() {
        "tdoa" => {
            let l = int("L")?;
            HrtfGain::Tdoa {
                h: read_block(&mut lines, l, "HRTF")?,
                tau_max: num("tau_max")?,
            }
        }
        "ipd" => {
            let q = int("Q")?;
            let b = int("B")?;
            let edges = get("band_edges")?
                .split(',')
                .map(|e| e.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| "band_edges must be a comma-separated integer list".to_string())?;
            let bands = BandPartition::new(edges).map_err(|e| e.to_string())?;
            if bands.num_bands() != b {
                return Err(format!("B={b} but band_edges define {} bands", bands.num_bands()));
            }
            HrtfGain::Ipd {
                h: read_block(&mut lines, q * b, "HRTF")?,
                q,
                bands,
            }
        }
        other => return Err(format!("unknown hrtf_model '{other}'")),
    };
    if lines.any(|l| !l.trim().is_empty()) {
        return Err("trailing data after the HRTF block".into());
    }
    let table = GainTable::new(gains, axes, criterion, num("p")?, get("noise_class")?.clone())
        .map_err(|e| e.to_string())?;
    hrtf.validate().map_err(|e| e.to_string())?;
    Ok((table, hrtf))
}

fn read_block<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    n: usize,
    what: &str,
) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::with_capacity(n);
    for line in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() {
            if out.is_empty() {
                continue;
            }
            break;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| format!("bad {what} value '{line}'"))?;
        if !v.is_finite() {
            return Err(format!("non-finite {what} value"));
        }
        out.push(v);
    }
    if out.len() != n {
        return Err(format!("expected {n} {what} values, found {}", out.len()));
    }
    Ok(out)
}
