//! Export learned spectral-gate magnitudes as PGM images: one min-max
//! normalized |K| = sqrt(k_re^2 + k_im^2) picture per channel, for the
//! leading channels of every gated spectral layer.

use std::path::Path;

use serde::Serialize;

use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};
use crate::io::pnm::write_pgm;
use crate::model::build::Plan;
use crate::numerics::scalar::Scalar;

pub const FILTERS_PER_LAYER: usize = 24;

#[derive(Clone, Debug, Serialize)]
pub struct FilterLayerEntry {
    pub layer: usize,
    pub grid: [usize; 2],
    pub channels: usize,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FilterIndex {
    pub layers: Vec<FilterLayerEntry>,
}

/// Min-max normalize to u8; a constant magnitude maps to mid gray.
fn normalize_to_bytes(values: &[f64]) -> Vec<u8> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return vec![128u8; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Write `layer{i}_filter{j}.pgm` files (gate magnitude, half-spectrum
/// width x grid height) for the first `FILTERS_PER_LAYER` channels of each
/// gated spectral layer, plus an `index.json` manifest.
pub fn dump_filters<T: Scalar>(
    params: &ParamStore<T>,
    plan: &Plan,
    out_dir: &Path,
) -> Result<FilterIndex> {
    let gates = plan.spectral_gates();
    if gates.is_empty() {
        return Err(Error::config("model has no spectral gates"));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut index = FilterIndex { layers: Vec::new() };
    for gate in &gates {
        let re = params
            .get(&format!("{}.re", gate.prefix))
            .ok_or_else(|| Error::config(format!("missing gate tensor {}.re", gate.prefix)))?;
        let im = params
            .get(&format!("{}.im", gate.prefix))
            .ok_or_else(|| Error::config(format!("missing gate tensor {}.im", gate.prefix)))?;
        let (gh, wh, c) = (re.shape()[0], re.shape()[1], re.shape()[2]);
        let shown = c.min(FILTERS_PER_LAYER);
        let mut files = Vec::with_capacity(shown);
        for ch in 0..shown {
            let mut mag = Vec::with_capacity(gh * wh);
            for h in 0..gh {
                for w in 0..wh {
                    let idx = (h * wh + w) * c + ch;
                    let (r, i) = (re.data()[idx].to_f64(), im.data()[idx].to_f64());
                    mag.push((r * r + i * i).sqrt());
                }
            }
            let bytes = normalize_to_bytes(&mag);
            let name = format!("layer{}_filter{}.pgm", gate.layer, ch);
            write_pgm(&out_dir.join(&name), wh, gh, &bytes)?;
            files.push(name);
        }
        index.layers.push(FilterLayerEntry {
            layer: gate.layer,
            grid: [gh, wh],
            channels: shown,
            files,
        });
    }
    std::fs::write(
        out_dir.join("index.json"),
        serde_json::to_vec_pretty(&index)?,
    )?;
    Ok(index)
}
