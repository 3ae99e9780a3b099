//! CSV and JSONL output with fixed schemas.
//!
//! Schemas are a stability contract for downstream tooling:
//! `errors.csv`: h,k,l2_bulk,l1_bulk,l2_surf,l1_surf,order_l2_bulk,order_l2_surf
//! `mass.csv`: t,rel_mass_error  —  `area.csv`: t,rel_area_change
//! `condition.csv`: t,kappa  —  `interface_XXXX.csv`: t,x0,y0,x1,y1,nx,ny
//! `fields_XXXX.csv`: field,vertex,x,y,value  —  `levelset_XXXX.csv`: vertex,x,y,rho

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde_json::json;

use crate::error::Result;
use crate::levelset::LevelSetField;
use crate::mesh::BackgroundMesh;
use crate::slabspace::TraceField;
use crate::solver::SparseLu;

use super::{ErrorRow, OutputConfig, SlabRecord};

pub(super) struct OutputWriter {
    dir: Option<PathBuf>,
    slab_log: Option<BufWriter<File>>,
}

impl OutputWriter {
    pub fn open(cfg: &OutputConfig) -> Result<OutputWriter> {
        let Some(dir) = cfg.dir.clone() else {
            return Ok(OutputWriter { dir: None, slab_log: None });
        };
        std::fs::create_dir_all(&dir)?;
        let slab_log = BufWriter::new(File::create(dir.join("slabs.jsonl"))?);
        Ok(OutputWriter { dir: Some(dir), slab_log: Some(slab_log) })
    }

    fn file(&self, name: &str) -> Result<Option<BufWriter<File>>> {
        match &self.dir {
            Some(dir) => Ok(Some(BufWriter::new(File::create(dir.join(name))?))),
            None => Ok(None),
        }
    }

    pub fn write_slab_record(&mut self, r: &SlabRecord) -> Result<()> {
        let Some(log) = self.slab_log.as_mut() else {
            return Ok(());
        };
        let record = json!({
            "slab": r.slab,
            "t": r.t_end,
            "newton_iterations": r.newton_iterations,
            "update_norms": r.update_norms,
            "residual_norms": r.residual_norms,
            "linear_residuals": r.linear_residuals,
            "condition": r.condition,
            "grad_norm_range": r.grad_norm_range.map(|(a, b)| vec![a, b]),
            "interface_moved_fast": r.interface_moved_fast,
        });
        writeln!(log, "{record}")?;
        Ok(())
    }

    pub fn write_mass_series(&mut self, series: &[(f64, f64)]) -> Result<()> {
        if let Some(mut f) = self.file("mass.csv")? {
            writeln!(f, "t,rel_mass_error")?;
            for (t, v) in series {
                writeln!(f, "{t},{v}")?;
            }
        }
        Ok(())
    }

    pub fn write_area_series(&mut self, series: &[(f64, f64)]) -> Result<()> {
        if let Some(mut f) = self.file("area.csv")? {
            writeln!(f, "t,rel_area_change")?;
            for (t, v) in series {
                writeln!(f, "{t},{v}")?;
            }
        }
        Ok(())
    }

    pub fn write_condition_series(&mut self, series: &[(f64, f64)]) -> Result<()> {
        if series.is_empty() {
            return Ok(());
        }
        if let Some(mut f) = self.file("condition.csv")? {
            writeln!(f, "t,kappa")?;
            for (t, v) in series {
                writeln!(f, "{t},{v}")?;
            }
        }
        Ok(())
    }

    pub fn write_frame(
        &mut self,
        index: usize,
        mesh: &BackgroundMesh,
        trace: &TraceField,
        levelset: &LevelSetField,
        cfg: &OutputConfig,
    ) -> Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        if cfg.export_interface {
            if let Some(mut f) = self.file(&format!("interface_{index:04}.csv"))? {
                trace.geometry.write_interface_csv(&mut f)?;
            }
        }
        if cfg.export_fields {
            if let Some(mut f) = self.file(&format!("fields_{index:04}.csv"))? {
                writeln!(f, "field,vertex,x,y,value")?;
                for (d, &v) in trace.bulk.vertices().iter().enumerate() {
                    let p = mesh.vertices[v];
                    writeln!(f, "bulk,{v},{},{},{}", p.x, p.y, trace.bulk_values[d])?;
                }
                for (d, &v) in trace.surface.vertices().iter().enumerate() {
                    let p = mesh.vertices[v];
                    writeln!(f, "surface,{v},{},{},{}", p.x, p.y, trace.surface_values[d])?;
                }
            }
        }
        if cfg.export_levelset {
            if let Some(mut f) = self.file(&format!("levelset_{index:04}.csv"))? {
                levelset.write_csv(&mut f)?;
            }
        }
        Ok(())
    }

    pub fn write_matrix(&mut self, slab: usize, lu: &SparseLu) -> Result<()> {
        if let Some(mut f) = self.file(&format!("matrix_{slab:04}.txt"))? {
            lu.write_coordinate(&mut f)?;
        }
        Ok(())
    }
}

/// Writes the convergence table in the `errors.csv` schema.
pub fn write_error_table(out: &mut dyn Write, rows: &[ErrorRow]) -> std::io::Result<()> {
    writeln!(out, "h,k,l2_bulk,l1_bulk,l2_surf,l1_surf,order_l2_bulk,order_l2_surf")?;
    for r in rows {
        let fmt = |o: Option<f64>| o.map_or_else(|| "nan".to_string(), |v| v.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.h,
            r.k,
            r.norms.l2_bulk,
            r.norms.l1_bulk,
            r.norms.l2_surf,
            r.norms.l1_surf,
            fmt(r.order_l2_bulk),
            fmt(r.order_l2_surf),
        )?;
    }
    Ok(())
}
