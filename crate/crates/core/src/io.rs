//! Plain-text file formats: rasters, plans, and map tables.
//!
//! Raster files carry a header line
//! `P_GRID d n1 ... nd min1 max1 ... mind maxd`
//! followed by whitespace-separated values in row-major order (last axis
//! fastest). Masks use 0/1 values, densities nonnegative reals.
//! Plan files are COO triplets under a `PLAN n m nnz objective` header with
//! 1-based indices and 17 significant digits.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use crate::grid::BBox;
use crate::lp::{Plan, PlanEntry};
use crate::measure::DensitySpec;
use crate::postprocess::{RasterDensity, TransportMap};
use crate::util::stable_sum;
use crate::{Error, Result};

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_raster(path: &Path, raster: &RasterDensity) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let d = raster.dims.len();
    write!(f, "P_GRID {d}")?;
    for n in &raster.dims {
        write!(f, " {n}")?;
    }
    for a in 0..d {
        write!(f, " {} {}", fmt17(raster.bbox.min[a]), fmt17(raster.bbox.max[a]))?;
    }
    writeln!(f)?;
    for (i, v) in raster.values.iter().enumerate() {
        if i > 0 {
            if i % 8 == 0 {
                writeln!(f)?;
            } else {
                write!(f, " ")?;
            }
        }
        write!(f, "{}", fmt17(*v))?;
    }
    writeln!(f)?;
    Ok(())
}

pub fn read_raster(path: &Path) -> Result<RasterDensity> {
    let file = std::fs::File::open(path)?;
    let mut tokens: Vec<String> = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        for t in line.split_whitespace() {
            tokens.push(t.to_string());
        }
    }
    let mut it = tokens.into_iter();
    let magic = it.next().ok_or_else(|| Error::Format("empty raster file".into()))?;
    if magic != "P_GRID" {
        return Err(Error::Format(format!("expected P_GRID header, found `{magic}`")));
    }
    let parse_usize = |t: Option<String>| -> Result<usize> {
        t.ok_or_else(|| Error::Format("truncated raster header".into()))?
            .parse()
            .map_err(|_| Error::Format("bad integer in raster header".into()))
    };
    let parse_f64 = |t: Option<String>| -> Result<f64> {
        t.ok_or_else(|| Error::Format("truncated raster file".into()))?
            .parse()
            .map_err(|_| Error::Format("bad number in raster file".into()))
    };
    let d = parse_usize(it.next())?;
    if d == 0 || d > 8 {
        return Err(Error::Format(format!("unsupported raster dimension {d}")));
    }
    let mut dims = Vec::with_capacity(d);
    for _ in 0..d {
        dims.push(parse_usize(it.next())?);
    }
    let mut min = Vec::with_capacity(d);
    let mut max = Vec::with_capacity(d);
    for _ in 0..d {
        min.push(parse_f64(it.next())?);
        max.push(parse_f64(it.next())?);
    }
    let total: usize = dims.iter().product();
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        values.push(parse_f64(it.next())?);
    }
    if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Format("raster values must be finite and nonnegative".into()));
    }
    Ok(RasterDensity {
        dims,
        bbox: BBox::new(min, max),
        values,
    })
}

/// Turn a raster into a density: cell centers sample the nearest pixel and
/// the mask admits points whose nearest pixel is positive.
pub fn raster_density_spec(name: impl Into<String>, raster: RasterDensity) -> DensitySpec {
    let data = Arc::new(raster);
    let lookup = {
        let data = data.clone();
        move |p: &[f64]| -> f64 {
            let d = data.dims.len();
            let mut flat = 0usize;
            let mut stride = 1usize;
            let mut idx = vec![0usize; d];
            for a in 0..d {
                let px = data.bbox.extent(a) / data.dims[a] as f64;
                let i = ((p[a] - data.bbox.min[a]) / px).floor();
                let i = (i.max(0.0) as usize).min(data.dims[a] - 1);
                idx[a] = i;
            }
            for a in (0..d).rev() {
                flat += idx[a] * stride;
                stride *= data.dims[a];
            }
            data.values[flat]
        }
    };
    let mask_lookup = lookup.clone();
    DensitySpec::new(
        name,
        data.bbox.clone(),
        Arc::new(move |p: &[f64]| mask_lookup(p) > 0.0),
        Arc::new(lookup),
    )
}

pub fn read_density_spec(path: &Path) -> Result<DensitySpec> {
    let raster = read_raster(path)?;
    Ok(raster_density_spec(path.display().to_string(), raster))
}

pub fn write_plan(path: &Path, plan: &Plan) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "PLAN {} {} {} {}",
        plan.n,
        plan.m,
        plan.entries.len(),
        fmt17(plan.objective)
    )?;
    for e in &plan.entries {
        writeln!(f, "{} {} {}", e.source + 1, e.target + 1, fmt17(e.mass))?;
    }
    Ok(())
}

pub fn read_plan(path: &Path) -> Result<Plan> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 5 || head[0] != "PLAN" {
        return Err(Error::Format("expected `PLAN n m nnz objective` header".into()));
    }
    let n: usize = head[1].parse().map_err(|_| Error::Format("bad n".into()))?;
    let m: usize = head[2].parse().map_err(|_| Error::Format("bad m".into()))?;
    let nnz: usize = head[3].parse().map_err(|_| Error::Format("bad nnz".into()))?;
    let objective: f64 = head[4].parse().map_err(|_| Error::Format("bad objective".into()))?;
    let mut entries = Vec::with_capacity(nnz);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("bad plan line `{line}`")));
        }
        let i: usize = parts[0].parse().map_err(|_| Error::Format("bad index".into()))?;
        let j: usize = parts[1].parse().map_err(|_| Error::Format("bad index".into()))?;
        let mass: f64 = parts[2].parse().map_err(|_| Error::Format("bad mass".into()))?;
        if i == 0 || j == 0 || i > n || j > m {
            return Err(Error::Format(format!("plan index ({i},{j}) out of range")));
        }
        entries.push(PlanEntry {
            source: (i - 1) as u32,
            target: (j - 1) as u32,
            mass,
        });
    }
    if entries.len() != nnz {
        return Err(Error::Format(format!(
            "plan header promised {nnz} entries, file has {}",
            entries.len()
        )));
    }
    let transported = stable_sum(entries.iter().map(|e| e.mass));
    Ok(Plan {
        entries,
        objective,
        duals: None,
        n,
        m,
        partial: false,
        transported_mass: transported,
        pivots: 0,
    })
}

/// One row per source: coordinates, projected target, mass.
pub fn write_map(path: &Path, map: &TransportMap) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let d = map.dim;
    write!(f, "#")?;
    for a in 0..d {
        write!(f, " x{}", a + 1)?;
    }
    for a in 0..d {
        write!(f, " ybar{}", a + 1)?;
    }
    writeln!(f, " mass")?;
    for i in 0..map.len() {
        let x = map.source(i);
        let y = map.target(i);
        for (k, v) in x.iter().chain(y).enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", fmt17(*v))?;
        }
        writeln!(f, " {}", fmt17(map.masses[i]))?;
    }
    Ok(())
}

/// 8-bit binary PGM scaled to the raster maximum (2-d rasters only).
pub fn write_pgm(path: &Path, raster: &RasterDensity) -> Result<()> {
    if raster.dims.len() != 2 {
        return Err(Error::InvalidArg("PGM output needs a 2-d raster".into()));
    }
    let (nx, ny) = (raster.dims[0], raster.dims[1]);
    let peak = raster.values.iter().fold(0.0f64, |a, v| a.max(*v));
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let mut bytes = Vec::with_capacity(nx * ny);
    // image rows scan the second axis top-down
    for row in (0..ny).rev() {
        for col in 0..nx {
            let v = raster.values[col * ny + row];
            bytes.push((v * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "P5")?;
    writeln!(f, "{nx} {ny}")?;
    writeln!(f, "255")?;
    f.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_roundtrip() {
        let dir = std::env::temp_dir().join(format!("otms_io_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let r = RasterDensity {
            dims: vec![2, 3],
            bbox: BBox::rect(0.0, 1.0, -1.0, 0.5),
            values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.5],
        };
        let p = dir.join("r.grid");
        write_raster(&p, &r).unwrap();
        let back = read_raster(&p).unwrap();
        assert_eq!(back, r);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn plan_roundtrip() {
        let dir = std::env::temp_dir().join(format!("otms_io_plan_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let plan = Plan {
            entries: vec![
                PlanEntry {
                    source: 0,
                    target: 2,
                    mass: 0.125,
                },
                PlanEntry {
                    source: 1,
                    target: 0,
                    mass: 0.875,
                },
            ],
            objective: 1.0 / 3.0,
            duals: None,
            n: 2,
            m: 3,
            partial: false,
            transported_mass: 1.0,
            pivots: 5,
        };
        let p = dir.join("plan.coo");
        write_plan(&p, &plan).unwrap();
        let back = read_plan(&p).unwrap();
        assert_eq!(back.entries, plan.entries);
        assert_eq!(back.objective, plan.objective);
        assert_eq!((back.n, back.m), (2, 3));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn raster_density_spec_samples_nearest_pixel() {
        let r = RasterDensity {
            dims: vec![2, 2],
            bbox: BBox::rect(0.0, 1.0, 0.0, 1.0),
            values: vec![1.0, 0.0, 0.0, 2.0],
        };
        let spec = raster_density_spec("r", r);
        assert_eq!((spec.density)(&[0.2, 0.2]), 1.0);
        assert_eq!((spec.density)(&[0.8, 0.8]), 2.0);
        assert!(!(spec.mask)(&[0.8, 0.2]));
        assert!((spec.mask)(&[0.2, 0.2]));
    }

    #[test]
    fn malformed_raster_rejected() {
        let dir = std::env::temp_dir().join(format!("otms_io_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.grid");
        std::fs::write(&p, "NOT_A_GRID 2 2").unwrap();
        assert!(matches!(read_raster(&p), Err(Error::Format(_))));
        std::fs::write(&p, "P_GRID 2 2 2 0 1 0 1 0.5 0.5").unwrap();
        assert!(matches!(read_raster(&p), Err(Error::Format(_))));
        std::fs::remove_dir_all(&dir).ok();
    }
}
