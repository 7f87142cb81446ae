//! Region file (JSON) and plotting vertices (CSV).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::format::sig12;

use super::geometry::{clip_triangle, planar, polygon_area};
use super::{CriticalRegion, MpqpError, PwaControlLaw, RowKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// `{"regions":[{"id","active_set","H","K","F","G","center"}],"n_e","T"}`.
    Json,
    /// `region_id,vertex_x,vertex_y` polygon vertices (three edges only).
    Csv,
}

#[derive(Serialize, Deserialize)]
struct RegionRecord {
    id: usize,
    active_set: Vec<usize>,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    k: Vec<f64>,
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    g: Vec<f64>,
    center: Vec<f64>,
    #[serde(default)]
    degenerate: bool,
}

#[derive(Serialize, Deserialize)]
struct LawRecord {
    regions: Vec<RegionRecord>,
    n_e: usize,
    #[serde(rename = "T")]
    horizon: usize,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>, MpqpError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(MpqpError::Parse(format!("expected rows of length {ncols}")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

/// Serialises `law` in the requested format.
pub fn export_regions(law: &PwaControlLaw, format: ExportFormat) -> String {
    match format {
        ExportFormat::Json => law.to_json(),
        ExportFormat::Csv => law.vertices_csv(),
    }
}

impl PwaControlLaw {
    pub fn to_json(&self) -> String {
        let record = LawRecord {
            regions: self
                .regions
                .iter()
                .map(|r| RegionRecord {
                    id: r.id,
                    active_set: r.active_set.clone(),
                    h: rows(&r.h),
                    k: r.k.iter().copied().collect(),
                    f: rows(&r.f),
                    g: r.g.iter().copied().collect(),
                    center: r.chebyshev_center.iter().copied().collect(),
                    degenerate: r.is_degenerate,
                })
                .collect(),
            n_e: self.n_e,
            horizon: self.horizon,
        };
        serde_json::to_string_pretty(&record).expect("region records serialise")
    }

    /// Reads a law written by [`PwaControlLaw::to_json`]. Row provenance and
    /// Chebyshev radii are not stored and come back empty.
    pub fn from_json(text: &str) -> Result<Self, MpqpError> {
        let record: LawRecord = serde_json::from_str(text).map_err(|e| MpqpError::Parse(e.to_string()))?;
        let n = record.n_e;
        let nz = n * record.horizon;
        let mut regions = Vec::with_capacity(record.regions.len());
        for r in record.regions {
            let h = matrix(&r.h, n)?;
            if r.k.len() != h.nrows() || r.g.len() != nz || r.f.len() != nz || r.center.len() != n {
                return Err(MpqpError::Parse(format!("region {} has inconsistent dimensions", r.id)));
            }
            regions.push(CriticalRegion {
                id: r.id,
                active_set: r.active_set,
                h,
                k: DVector::from_vec(r.k),
                f: matrix(&r.f, n)?,
                g: DVector::from_vec(r.g),
                chebyshev_center: DVector::from_vec(r.center),
                chebyshev_radius: f64::NAN,
                is_degenerate: r.degenerate,
                row_kinds: Vec::<RowKind>::new(),
            });
        }
        Ok(Self { regions, n_e: n, horizon: record.horizon })
    }

    /// Planar polygon of each region (three edges only).
    pub fn polygons(&self) -> Option<Vec<(usize, Vec<[f64; 2]>)>> {
        if self.n_e != 3 {
            return None;
        }
        Some(
            self.regions
                .iter()
                .map(|r| (r.id, clip_triangle(&r.h, &r.k).iter().map(|p| planar(p.as_slice())).collect()))
                .collect(),
        )
    }

    /// Sum of the planar polygon areas (three edges only).
    pub fn total_area(&self) -> Option<f64> {
        self.polygons().map(|ps| ps.iter().map(|(_, p)| polygon_area(p)).sum())
    }

    pub fn vertices_csv(&self) -> String {
        let mut out = String::from("region_id,vertex_x,vertex_y\n");
        for (id, poly) in self.polygons().unwrap_or_default() {
            for [x, y] in poly {
                out.push_str(&format!("{id},{},{}\n", sig12(x), sig12(y)));
            }
        }
        out
    }
}
