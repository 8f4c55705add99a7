//! Command-line frontend: solve, partial, barycenter, bench.
//!
//! Every run writes its artifacts into `--out`: `plan.coo`, `map.txt`,
//! rasters in the plain-text grid format (optionally PGM), and a
//! `summary.txt` with a stable key order so reruns diff cleanly. Lines whose
//! key starts with `time.` or `rss` carry wall-clock measurements and are
//! the only ones expected to change between identical runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::grid::BBox;
use crate::io;
use crate::lp::{self, PivotRule, SolveOptions};
use crate::measure::{preset, CostSpec, DensitySpec, Preset};
use crate::multiscale::{
    multiscale_barycenter, multiscale_transport, LevelTrace, MultiscaleConfig,
};
use crate::postprocess::{
    analytic_map, barycentric_project, error_metrics, pushforward, smooth, AnalyticCase,
    PointCloud, RasterDensity,
};
use crate::util::lsq_slope;
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "otms", version, about = "Exact optimal transport on grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Transport one density onto another and emit plan, map, and raster.
    Solve(SolveArgs),
    /// Partial transport sweep over a list of mass fractions.
    Partial(PartialArgs),
    /// Wasserstein barycenter of two or more densities.
    Barycenter(BarycenterArgs),
    /// Square-to-diamond scaling benchmark.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Transport cost, `p=<exponent>` for |x-y|^p.
    #[arg(long, default_value = "p=2")]
    pub cost: String,
    /// Cells per axis on the coarsest grid.
    #[arg(long, default_value_t = 16)]
    pub coarse: u32,
    /// Refinement levels below the coarse solve.
    #[arg(long, default_value_t = 2)]
    pub levels: u32,
    /// Support growth radius.
    #[arg(long, default_value_t = 1)]
    pub dilate: u32,
    /// Extra growth passes per level.
    #[arg(long = "dilate-repeats", default_value_t = 0)]
    pub dilate_repeats: u32,
    /// Retries with a larger radius on boundary contact or infeasibility.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Gaussian smoothing deviation as a multiple of the finest spacing.
    #[arg(long, default_value_t = 6.0)]
    pub sigma: f64,
    /// Pixels along the longest axis of emitted rasters.
    #[arg(long = "raster-n", default_value_t = 128)]
    pub raster_n: usize,
    /// Also write 8-bit PGM images next to rasters.
    #[arg(long, default_value_t = false)]
    pub pgm: bool,
    /// Seed for the `random` preset.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Source density: preset name or raster file path.
    #[arg(long)]
    pub source: String,
    /// Target density: preset name or raster file path.
    #[arg(long)]
    pub target: String,
    /// Compare the projected map against a known solution: ex33, split_circle, none.
    #[arg(long, default_value = "none")]
    pub validate: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct PartialArgs {
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    /// Comma-separated transported-mass fractions in (0, 1].
    #[arg(long, default_value = "0.2,0.4,0.6,0.8,1.0")]
    pub mass: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct BarycenterArgs {
    /// Comma-separated densities (presets or raster paths).
    #[arg(long)]
    pub measures: String,
    /// Comma-separated weights; default equal.
    #[arg(long)]
    pub weights: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated finest grid sizes, each `coarse * 2^k`.
    #[arg(long, default_value = "32,64,128")]
    pub sizes: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn parse_cost(spec: &str) -> Result<CostSpec> {
    let body = spec.strip_prefix("p=").unwrap_or(spec);
    let p: f64 = body
        .parse()
        .map_err(|_| Error::InvalidArg(format!("cannot parse cost `{spec}`")))?;
    CostSpec::power(p)
}

/// Preset name or raster file path, with the seed applied to `random`.
pub fn resolve_density(spec: &str, seed: Option<u64>) -> Result<DensitySpec> {
    if spec.starts_with("file:") {
        return io::read_density_spec(Path::new(spec.trim_start_matches("file:")));
    }
    if Path::new(spec).is_file() {
        return io::read_density_spec(Path::new(spec));
    }
    let parsed = Preset::parse(spec)?;
    let parsed = match (parsed, seed) {
        (Preset::Random { dim, .. }, Some(s)) if !spec.contains("seed=") => {
            Preset::Random { seed: s, dim }
        }
        (p, _) => p,
    };
    Ok(parsed.density_spec())
}

fn config_from(common: &CommonArgs) -> MultiscaleConfig {
    MultiscaleConfig {
        coarse_n: common.coarse,
        levels: common.levels,
        dilation_radius: common.dilate,
        dilation_repeats: common.dilate_repeats,
        max_retries: common.retries,
        solve: SolveOptions {
            pivot_rule: PivotRule::Auto,
            ..Default::default()
        },
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            return rest.trim().trim_end_matches(" kB").trim().parse().ok();
        }
    }
    None
}

struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    fn new() -> Self {
        Summary { lines: Vec::new() }
    }

    fn push(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.to_string(), value.into()));
    }

    fn push_traces(&mut self, traces: &[LevelTrace]) {
        for t in traces {
            let l = t.level;
            self.push(&format!("level.{l}.n"), t.n.to_string());
            self.push(&format!("level.{l}.m"), t.m.to_string());
            self.push(&format!("level.{l}.support"), t.support_size.to_string());
            self.push(&format!("level.{l}.objective"), fmt17(t.objective));
            self.push(&format!("level.{l}.iterations"), t.iterations.to_string());
            self.push(
                &format!("level.{l}.boundary_touch"),
                t.boundary_touch.to_string(),
            );
            self.push(&format!("level.{l}.retries"), t.retries.to_string());
            self.push(
                &format!("level.{l}.dilation_radius"),
                t.dilation_radius_used.to_string(),
            );
            self.push(
                &format!("time.level.{l}_s"),
                format!("{:.3}", t.wall_time.as_secs_f64()),
            );
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (k, v) in &self.lines {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn raster_dims(bbox: &BBox, raster_n: usize) -> Vec<usize> {
    let me = bbox.max_extent();
    (0..bbox.dim())
        .map(|a| ((raster_n as f64 * bbox.extent(a) / me).round() as usize).max(1))
        .collect()
}

fn emit_cloud_raster(
    cloud: &PointCloud,
    sigma_h: f64,
    h: f64,
    bbox: &BBox,
    raster_n: usize,
    out: &Path,
    stem: &str,
    pgm: bool,
) -> Result<RasterDensity> {
    let sigma = sigma_h * h;
    let padded = bbox.padded(4.0 * sigma);
    let dims = raster_dims(&padded, raster_n);
    let raster = smooth(cloud, sigma, &dims, Some(&padded))?;
    io::write_raster(&out.join(format!("{stem}.grid")), &raster)?;
    if pgm {
        io::write_pgm(&out.join(format!("{stem}.pgm")), &raster)?;
    }
    Ok(raster)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Partial(args) => cmd_partial(args),
        Command::Barycenter(args) => cmd_barycenter(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let t0 = Instant::now();
    let common = &args.common;
    std::fs::create_dir_all(&common.out)?;
    let source = resolve_density(&args.source, common.seed)?;
    let target = resolve_density(&args.target, common.seed)?;
    let cost = parse_cost(&common.cost)?;
    let validate = AnalyticCase::parse(&args.validate)?;
    let config = config_from(common);

    let art = multiscale_transport(&source, &target, &cost, None, &config)?;
    io::write_plan(&common.out.join("plan.coo"), &art.plan)?;

    let map = barycentric_project(&art.plan, &art.mu, &art.target_grid)?;
    io::write_map(&common.out.join("map.txt"), &map)?;

    let cloud = pushforward(&map);
    emit_cloud_raster(
        &cloud,
        common.sigma,
        art.target_grid.spacing(),
        &target.bbox,
        common.raster_n,
        &common.out,
        "density",
        common.pgm,
    )?;

    let report = lp::verify_optimality(&art.plan, &art.mu, &art.nu, &cost, None)?;

    let mut s = Summary::new();
    s.push("command", "solve");
    s.push("source", &source.name);
    s.push("target", &target.name);
    s.push("cost", &common.cost);
    s.push("coarse", common.coarse.to_string());
    s.push("levels", common.levels.to_string());
    s.push("dilate", common.dilate.to_string());
    s.push("sigma", common.sigma.to_string());
    s.push("objective", fmt17(art.plan.objective));
    s.push("plan_support", art.plan.support_len().to_string());
    s.push(
        "peak_lp_vars",
        art.traces
            .iter()
            .map(|t| t.support_size)
            .max()
            .unwrap_or(0)
            .to_string(),
    );
    s.push("feasibility_residual", fmt17(report.max_row_residual.max(report.max_col_residual)));
    s.push("dual_infeasibility", fmt17(report.dual_infeasibility));
    s.push("cs_violation", fmt17(report.max_cs_violation));
    if let Some(case) = validate {
        let (max_err, l2_err) = error_metrics(&map, &|x| analytic_map(case, x));
        s.push("validate.case", &args.validate);
        s.push("validate.max_error", fmt17(max_err));
        s.push("validate.l2_error", fmt17(l2_err));
    }
    s.push_traces(&art.traces);
    s.push("time.total_s", format!("{:.3}", t0.elapsed().as_secs_f64()));
    if let Some(kb) = peak_rss_kb() {
        s.push("rss_peak_kb", kb.to_string());
    }
    s.write(&common.out.join("summary.txt"))?;
    println!(
        "solve: objective {} with {} plan entries -> {}",
        art.plan.objective,
        art.plan.support_len(),
        common.out.display()
    );
    Ok(())
}

fn parse_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArg(format!("bad number `{s}` in list")))
        })
        .collect()
}

fn cmd_partial(args: PartialArgs) -> Result<()> {
    let t0 = Instant::now();
    let common = &args.common;
    std::fs::create_dir_all(&common.out)?;
    let source = resolve_density(&args.source, common.seed)?;
    let target = resolve_density(&args.target, common.seed)?;
    let cost = parse_cost(&common.cost)?;
    let config = config_from(common);
    let fractions = parse_list(&args.mass)?;
    if fractions.is_empty() {
        return Err(Error::InvalidArg("empty mass list".to_string()));
    }

    let mut s = Summary::new();
    s.push("command", "partial");
    s.push("source", &source.name);
    s.push("target", &target.name);
    s.push("cost", &common.cost);
    s.push("coarse", common.coarse.to_string());
    s.push("levels", common.levels.to_string());
    s.push("fractions", &args.mass);

    let mut objectives = Vec::new();
    for &f in &fractions {
        let art = multiscale_transport(&source, &target, &cost, Some(f), &config)?;
        let tag = format!("{f:.2}");
        io::write_plan(&common.out.join(format!("plan_f{tag}.coo")), &art.plan)?;

        // active cells: more than half of the cell's mass is transported
        let rows = art.plan.row_sums();
        let g = &art.source_grid;
        let dims: Vec<usize> = g.axis_cells().iter().map(|n| *n as usize).collect();
        let strides = {
            let mut st = vec![1usize; dims.len()];
            for a in (0..dims.len().saturating_sub(1)).rev() {
                st[a] = st[a + 1] * dims[a + 1];
            }
            st
        };
        let mut values = vec![0.0; dims.iter().product()];
        for i in 0..g.len() {
            if art.mu.weights[i] > 0.0 && rows[i] > 0.5 * art.mu.weights[i] {
                let idx = g.lattice_index(i);
                let flat: usize = (0..dims.len())
                    .map(|a| idx[a] as usize * strides[a])
                    .sum();
                values[flat] = 1.0;
            }
        }
        let raster = RasterDensity {
            dims,
            bbox: g.bbox().clone(),
            values,
        };
        io::write_raster(&common.out.join(format!("active_f{tag}.grid")), &raster)?;
        if common.pgm {
            io::write_pgm(&common.out.join(format!("active_f{tag}.pgm")), &raster)?;
        }
        s.push(&format!("objective.f{tag}"), fmt17(art.plan.objective));
        s.push(
            &format!("transported.f{tag}"),
            fmt17(art.plan.transported_mass),
        );
        objectives.push(art.plan.objective);
    }
    for w in objectives.windows(2) {
        if w[1] < w[0] - 1e-9 {
            return Err(Error::InvalidArg(format!(
                "objectives decreased across the sweep: {} then {}",
                w[0], w[1]
            )));
        }
    }
    s.push("monotone", "true");
    s.push("time.total_s", format!("{:.3}", t0.elapsed().as_secs_f64()));
    if let Some(kb) = peak_rss_kb() {
        s.push("rss_peak_kb", kb.to_string());
    }
    s.write(&common.out.join("summary.txt"))?;
    println!(
        "partial: {} fractions, objectives {:?} -> {}",
        fractions.len(),
        objectives,
        common.out.display()
    );
    Ok(())
}

fn cmd_barycenter(args: BarycenterArgs) -> Result<()> {
    let t0 = Instant::now();
    let common = &args.common;
    std::fs::create_dir_all(&common.out)?;
    let specs: Vec<DensitySpec> = args
        .measures
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| resolve_density(s.trim(), common.seed))
        .collect::<Result<_>>()?;
    if specs.len() < 2 {
        return Err(Error::InvalidArg(
            "need at least two measures for a barycenter".to_string(),
        ));
    }
    let weights = match &args.weights {
        Some(w) => parse_list(w)?,
        None => vec![1.0 / specs.len() as f64; specs.len()],
    };
    let cost = parse_cost(&common.cost)?;
    let config = config_from(common);

    let art = multiscale_barycenter(&specs, &weights, &cost, None, &config)?;

    // barycenter weights as a density raster over the support grid lattice
    let g = &art.support_grid;
    let dims: Vec<usize> = g.axis_cells().iter().map(|n| *n as usize).collect();
    let strides = {
        let mut st = vec![1usize; dims.len()];
        for a in (0..dims.len().saturating_sub(1)).rev() {
            st[a] = st[a + 1] * dims[a + 1];
        }
        st
    };
    let vol = g.cell_volume();
    let mut values = vec![0.0; dims.iter().product()];
    for i in 0..g.len() {
        let idx = g.lattice_index(i);
        let flat: usize = (0..dims.len())
            .map(|a| idx[a] as usize * strides[a])
            .sum();
        values[flat] = art.rho.weights[i] / vol;
    }
    let raster = RasterDensity {
        dims,
        bbox: g.bbox().clone(),
        values,
    };
    io::write_raster(&common.out.join("barycenter.grid"), &raster)?;
    if common.pgm {
        io::write_pgm(&common.out.join("barycenter.pgm"), &raster)?;
    }

    // smoothed view
    let cloud = PointCloud {
        dim: g.dim(),
        points: (0..g.len()).flat_map(|i| g.center(i).to_vec()).collect(),
        weights: art.rho.weights.clone(),
    };
    emit_cloud_raster(
        &cloud,
        common.sigma,
        g.spacing(),
        g.bbox(),
        common.raster_n,
        &common.out,
        "barycenter_smooth",
        common.pgm,
    )?;

    for (k, plan) in art.couplings.iter().enumerate() {
        io::write_plan(&common.out.join(format!("coupling_{k}.coo")), plan)?;
    }

    let mut s = Summary::new();
    s.push("command", "barycenter");
    s.push("measures", &args.measures);
    s.push(
        "weights",
        weights
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    s.push("cost", &common.cost);
    s.push("coarse", common.coarse.to_string());
    s.push("levels", common.levels.to_string());
    s.push("joint_objective", fmt17(art.joint_objective));
    s.push(
        "barycenter_support",
        art.rho.positive_cells().len().to_string(),
    );
    s.push_traces(&art.traces);
    s.push("time.total_s", format!("{:.3}", t0.elapsed().as_secs_f64()));
    if let Some(kb) = peak_rss_kb() {
        s.push("rss_peak_kb", kb.to_string());
    }
    s.write(&common.out.join("summary.txt"))?;
    println!(
        "barycenter: joint objective {} over {} cells -> {}",
        art.joint_objective,
        art.rho.positive_cells().len(),
        common.out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    use std::io::Write;
    let common = &args.common;
    std::fs::create_dir_all(&common.out)?;
    let sizes: Vec<usize> = parse_list(&args.sizes)?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let cost = parse_cost(&common.cost)?;
    let source = preset("uniform_square")?;
    let target = preset("uniform_diamond")?;

    let mut csv = std::io::BufWriter::new(std::fs::File::create(common.out.join("bench.csv"))?);
    writeln!(csv, "N,vars,time_s,peak_lp_vars,support_per_level")?;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut s = Summary::new();
    s.push("command", "bench");
    s.push("sizes", &args.sizes);
    s.push("coarse", common.coarse.to_string());

    for &n in &sizes {
        if n < common.coarse as usize || !(n / common.coarse as usize).is_power_of_two() {
            return Err(Error::InvalidArg(format!(
                "size {n} is not coarse * 2^k for coarse {}",
                common.coarse
            )));
        }
        let levels = (n / common.coarse as usize).trailing_zeros();
        let config = MultiscaleConfig {
            coarse_n: common.coarse,
            levels,
            dilation_radius: common.dilate,
            dilation_repeats: common.dilate_repeats,
            max_retries: common.retries,
            solve: SolveOptions::default(),
        };
        let t = Instant::now();
        let art = multiscale_transport(&source, &target, &cost, None, &config)?;
        let secs = t.elapsed().as_secs_f64();
        let vars = 2 * n * n;
        let peak = art.traces.iter().map(|t| t.support_size).max().unwrap_or(0);
        let supports: Vec<String> = art
            .traces
            .iter()
            .map(|t| t.support_size.to_string())
            .collect();
        writeln!(
            csv,
            "{n},{vars},{secs:.4},{peak},{}",
            supports.join(";")
        )?;
        s.push(&format!("bench.{n}.objective"), fmt17(art.plan.objective));
        s.push(&format!("bench.{n}.peak_lp_vars"), peak.to_string());
        s.push(&format!("time.bench.{n}_s"), format!("{secs:.4}"));
        xs.push((vars as f64).ln());
        ys.push(secs.max(1e-4).ln());
        println!("bench N={n}: {secs:.3}s, peak vars {peak}");
    }
    if xs.len() >= 2 {
        let slope = lsq_slope(&xs, &ys);
        s.push("time.loglog_slope", format!("{slope:.4}"));
        println!("log-log slope of time vs problem size: {slope:.3}");
    }
    if let Some(kb) = peak_rss_kb() {
        s.push("rss_peak_kb", kb.to_string());
    }
    s.write(&common.out.join("summary.txt"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_parsing() {
        assert!(matches!(parse_cost("p=2").unwrap(), CostSpec::Power(p) if p == 2.0));
        assert!(matches!(parse_cost("1.05").unwrap(), CostSpec::Power(p) if p == 1.05));
        assert!(parse_cost("banana").is_err());
        assert!(parse_cost("p=-1").is_err());
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("0.2,0.4").unwrap(), vec![0.2, 0.4]);
        assert!(parse_list("a,b").is_err());
    }

    #[test]
    fn density_resolution_prefers_presets() {
        let d = resolve_density("uniform_square", None).unwrap();
        assert!(d.name.starts_with("uniform_square"));
        assert!(resolve_density("no_such_thing", None).is_err());
    }

    #[test]
    fn seed_flag_feeds_random_preset() {
        let a = resolve_density("random", Some(9)).unwrap();
        assert!(a.name.contains('9'));
        let b = resolve_density("random:seed=3", Some(9)).unwrap();
        assert!(b.name.contains('3'));
    }
}
