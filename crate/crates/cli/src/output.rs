//! Writers for reports, resonance tables and profile fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use multiphase_wkb::lattice_resonance::{ModeId, Resonance};
use multiphase_wkb::profile_solver::{ProfileField, SampledProfile, SlowGrid};
use serde::Serialize;

use crate::config::Format;

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

pub fn lattice_label(n: &[i64]) -> String {
    n.iter().map(i64::to_string).collect::<Vec<_>>().join(";")
}

pub fn mode_label(id: &ModeId) -> String {
    let n: Vec<String> = id.n0.iter().map(i64::to_string).collect();
    format!("{}_r{}", n.join("_"), id.root)
}

pub const RESONANCE_HEADER: [&str; 15] = [
    "lp",
    "lq",
    "lr",
    "np",
    "xp",
    "nq",
    "xq",
    "nr",
    "xr",
    "gamma_pq_re",
    "gamma_pq_im",
    "gamma_pr_re",
    "gamma_pr_im",
    "type",
    "residual",
];

pub fn write_resonances(path: &Path, resonances: &[Resonance]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(RESONANCE_HEADER)?;
    for r in resonances {
        w.write_record([
            r.lp.to_string(),
            r.lq.to_string(),
            r.lr.to_string(),
            lattice_label(&r.p.id.n0),
            format!("{:e}", r.p.xi0),
            lattice_label(&r.q.id.n0),
            format!("{:e}", r.q.xi0),
            lattice_label(&r.r.id.n0),
            format!("{:e}", r.r.xi0),
            format!("{:e}", r.gamma_pq.re),
            format!("{:e}", r.gamma_pq.im),
            format!("{:e}", r.gamma_pr.re),
            format!("{:e}", r.gamma_pr.im),
            r.rtype.label().to_string(),
            format!("{:e}", r.residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ModeEntry {
    pub n0: Vec<i64>,
    pub root: usize,
    pub xi0: f64,
    pub branch: usize,
    pub dxitau: f64,
    /// `resonant` or `burgers`.
    pub system: &'static str,
    pub file: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct FieldSidecar {
    pub format: Format,
    pub grid: SlowGrid,
    pub stride: usize,
    /// Positive harmonics; `σ_{−λ}` is the conjugate of `σ_λ`.
    pub harmonics: Vec<i64>,
    pub modes: Vec<ModeEntry>,
    pub file: Option<String>,
    pub dtype: Option<&'static str>,
    pub shape: Option<Vec<usize>>,
    pub order: Vec<&'static str>,
}

fn strided(n: usize, stride: usize) -> impl Iterator<Item = usize> + Clone {
    (0..n).step_by(stride)
}

/// Writes every mode of `fields` (all on `grid`) and returns the sidecar.
pub fn write_fields(
    dir: &Path,
    fields: &[(&ProfileField, &'static str)],
    grid: &SlowGrid,
    format: Format,
    stride: usize,
) -> Result<FieldSidecar> {
    let harmonics: Vec<i64> = fields.first().map_or(Vec::new(), |(f, _)| f.harmonics.clone());
    let (nt, ny, nx) = (
        strided(grid.nt, stride).count(),
        strided(grid.ny, stride).count(),
        strided(grid.nx, stride).count(),
    );
    let mut modes = Vec::new();
    let mut bin = match format {
        Format::Bin => Some(BufWriter::new(
            File::create(dir.join("fields.bin")).context("cannot create fields.bin")?,
        )),
        Format::Csv => None,
    };
    for (field, system) in fields {
        for (m, key) in field.modes.iter().enumerate() {
            let file = match format {
                Format::Csv => {
                    let name = format!("field_{}.csv", mode_label(&key.id));
                    let mut w = csv_writer(&dir.join(&name))?;
                    w.write_record(["t", "y", "xd", "lambda", "re", "im"])?;
                    for (h, l) in field.harmonics.iter().enumerate() {
                        for j in strided(grid.nt, stride) {
                            for k in strided(grid.ny, stride) {
                                for i in strided(grid.nx, stride) {
                                    let z = field.get(m, h, j, k, i);
                                    w.write_record([
                                        format!("{:e}", grid.t(j)),
                                        format!("{:e}", grid.y(k)),
                                        format!("{:e}", grid.x(i)),
                                        l.to_string(),
                                        format!("{:e}", z.re),
                                        format!("{:e}", z.im),
                                    ])?;
                                }
                            }
                        }
                    }
                    w.flush()?;
                    Some(name)
                }
                Format::Bin => {
                    let out = bin.as_mut().expect("binary writer");
                    for h in 0..field.harmonics.len() {
                        for j in strided(grid.nt, stride) {
                            for k in strided(grid.ny, stride) {
                                for i in strided(grid.nx, stride) {
                                    let z = field.get(m, h, j, k, i);
                                    out.write_all(&z.re.to_le_bytes())?;
                                    out.write_all(&z.im.to_le_bytes())?;
                                }
                            }
                        }
                    }
                    None
                }
            };
            modes.push(ModeEntry {
                n0: key.id.n0.clone(),
                root: key.id.root,
                xi0: key.xi0,
                branch: key.branch,
                dxitau: key.dxitau,
                system,
                file,
            });
        }
    }
    if let Some(mut out) = bin {
        out.flush()?;
    }
    let binary = format == Format::Bin;
    Ok(FieldSidecar {
        format,
        grid: *grid,
        stride,
        shape: binary.then(|| vec![modes.len(), harmonics.len(), nt, ny, nx, 2]),
        harmonics,
        modes,
        file: binary.then(|| "fields.bin".to_string()),
        dtype: binary.then_some("f64 little-endian"),
        order: if binary {
            vec!["mode", "lambda", "t", "y", "x_d", "re_im"]
        } else {
            vec!["lambda", "t", "y", "x_d"]
        },
    })
}

/// `u^app` samples as `t,y,xd,u0,u1,…`.
pub fn write_sampled(dir: &Path, profile: &SampledProfile, stride: usize) -> Result<()> {
    let g = &profile.grid;
    let mut w = csv_writer(&dir.join("uapp.csv"))?;
    let mut header = vec!["t".to_string(), "y".to_string(), "xd".to_string()];
    header.extend((0..profile.n).map(|c| format!("u{c}")));
    w.write_record(&header)?;
    for j in strided(g.nt, stride) {
        for k in strided(g.ny, stride) {
            for i in strided(g.nx, stride) {
                let mut row = vec![
                    format!("{:e}", g.t(j)),
                    format!("{:e}", g.y(k)),
                    format!("{:e}", g.x(i)),
                ];
                row.extend(profile.at(i, j, k).iter().map(|v| format!("{v:e}")));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
