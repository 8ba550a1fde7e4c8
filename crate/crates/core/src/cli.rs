//! Config parsing, the `run`, `plotdata` and `selftest` commands, and the
//! CSV/SVG result formats.
//!
//! An experiment directory holds three files:
//!
//! * `traces.csv`: `sparsity,policy_label,seed,t,inst_regret,cum_regret,level`,
//!   one row per round of every episode, `level = -1` for policies that do
//!   not play ladder levels.
//! * `aggregate.csv`: `sparsity,policy_label,t,mean,std,reps`, the pointwise
//!   mean and population standard deviation of cumulative regret.
//! * `manifest.toml`: the fully resolved config. Passing it back to `run`
//!   reproduces `traces.csv` byte for byte.
//!
//! Floats are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covariance::{CovarianceState, Vector};
use crate::environment::sample_unit_sphere;
use crate::error::{Error, Result};
use crate::harness::{
    aggregate, run_experiment, AggregateResult, ExperimentConfig, ExperimentResult, PolicyKindSpec,
    PolicySpec, RegretTrace,
};

pub const TRACES_FILE: &str = "traces.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PLOTDATA_FILE: &str = "plotdata.csv";

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPARSEBANDIT_OUT";
pub const DEFAULT_OUT_DIR: &str = "results";
pub const DEFAULT_STRIDE: usize = 10;

const TRACES_HEADER: &str = "sparsity,policy_label,seed,t,inst_regret,cum_regret,level";
const AGGREGATE_HEADER: &str = "sparsity,policy_label,t,mean,std,reps";
const PLOTDATA_HEADER: &str = "sparsity,policy_label,t,mean,lower,upper";

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Parses and resolves a TOML config. Errors name the offending key path.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("", e.to_string()))?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().message().to_string())
    })?;
    config.resolve()
}

/// The manifest text: a version comment followed by the resolved config.
pub fn manifest_text(config: &ExperimentConfig) -> Result<String> {
    let body = toml::to_string(config).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(format!(
        "# sparsebandit {}\n{body}",
        env!("CARGO_PKG_VERSION")
    ))
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub horizon: Option<u64>,
    pub out: Option<PathBuf>,
    pub shared_noise: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, mut config: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(reps) = self.reps {
            config.repetitions = reps;
        }
        if let Some(horizon) = self.horizon {
            config.horizon = horizon;
        }
        if let Some(shared) = self.shared_noise {
            config.shared_noise = shared;
        }
        if let Some(out) = &self.out {
            config.output = Some(out.clone());
        }
        config.resolve()
    }
}

/// Paths of one experiment's outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultFiles {
    pub dir: PathBuf,
    pub traces: PathBuf,
    pub aggregate: PathBuf,
    pub manifest: PathBuf,
}

impl ResultFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            traces: dir.join(TRACES_FILE),
            aggregate: dir.join(AGGREGATE_FILE),
            manifest: dir.join(MANIFEST_FILE),
        }
    }

    fn remove(&self) {
        for p in [&self.traces, &self.aggregate, &self.manifest] {
            let _ = fs::remove_file(p);
        }
    }
}

/// Output directory: `--out`, then the config, then `$SPARSEBANDIT_OUT`,
/// then `results`.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .output
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<ResultFiles> {
    let config = overrides.apply(parse_config(config_path)?)?;
    let dir = output_dir(&config);
    run_to_dir(&config, &dir).map(|(files, _)| files)
}

/// Runs the experiment and writes its three files into `dir`.
///
/// The files are created before any episode runs; on failure they are
/// removed again.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<(ResultFiles, ExperimentResult)> {
    let config = config.clone().resolve()?;
    fs::create_dir_all(dir)?;
    let files = ResultFiles::in_dir(dir);
    let opened = (|| -> Result<_> {
        Ok((
            File::create(&files.traces)?,
            File::create(&files.aggregate)?,
            File::create(&files.manifest)?,
        ))
    })();
    let (traces_file, aggregate_file, manifest_file) = match opened {
        Ok(handles) => handles,
        Err(e) => {
            files.remove();
            return Err(e);
        }
    };
    let outcome = (|| -> Result<ExperimentResult> {
        let result = run_experiment(&config)?;
        log::info!(
            "{} traces, {} aggregate curves",
            result.traces.len(),
            result.aggregates.len()
        );
        let mut w = BufWriter::new(traces_file);
        write_traces(&mut w, &result.traces)?;
        w.flush()?;
        let mut w = BufWriter::new(aggregate_file);
        write_aggregates(&mut w, &result.aggregates)?;
        w.flush()?;
        let mut w = BufWriter::new(manifest_file);
        w.write_all(manifest_text(&config)?.as_bytes())?;
        w.flush()?;
        Ok(result)
    })();
    match outcome {
        Ok(result) => Ok((files, result)),
        Err(e) => {
            files.remove();
            Err(e)
        }
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_traces<W: Write>(w: &mut W, traces: &[RegretTrace]) -> Result<()> {
    writeln!(w, "{TRACES_HEADER}")?;
    for tr in traces {
        for t in 0..tr.horizon() {
            let level = tr.levels[t].map_or(-1, |l| l as i64);
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                tr.sparsity,
                tr.label,
                tr.seed,
                t + 1,
                fmt_f(tr.inst_regret[t]),
                fmt_f(tr.cum_regret[t]),
                level
            )?;
        }
    }
    Ok(())
}

pub fn write_aggregates<W: Write>(w: &mut W, aggregates: &[AggregateResult]) -> Result<()> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for agg in aggregates {
        for t in 0..agg.mean.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                agg.sparsity,
                agg.label,
                t + 1,
                fmt_f(agg.mean[t]),
                fmt_f(agg.std[t]),
                agg.repetitions
            )?;
        }
    }
    Ok(())
}

fn parse_err(path: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    name: &str,
    path: &str,
    line: u64,
) -> Result<T> {
    let raw = record
        .get(i)
        .ok_or_else(|| parse_err(path, line, format!("missing column `{name}`")))?;
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("bad `{name}` value `{raw}`")))
}

/// Reads a traces file back into episodes. `path` only labels errors.
pub fn read_traces<R: Read>(reader: R, path: &str) -> Result<Vec<RegretTrace>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != TRACES_HEADER {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{TRACES_HEADER}`, found `{header}`"),
        ));
    }
    let mut traces: Vec<RegretTrace> = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(parse_err(path, line, e.to_string())),
        }
        if record.len() != 7 {
            return Err(parse_err(
                path,
                line,
                format!("expected 7 fields, found {}", record.len()),
            ));
        }
        let sparsity: usize = field(&record, 0, "sparsity", path, line)?;
        let label = record[1].to_string();
        let seed: u64 = field(&record, 2, "seed", path, line)?;
        let t: usize = field(&record, 3, "t", path, line)?;
        let inst: f64 = field(&record, 4, "inst_regret", path, line)?;
        let cum: f64 = field(&record, 5, "cum_regret", path, line)?;
        let level: i64 = field(&record, 6, "level", path, line)?;
        if level < -1 {
            return Err(parse_err(path, line, format!("bad level {level}")));
        }
        let continues = traces.last().is_some_and(|tr| {
            tr.sparsity == sparsity && tr.label == label && tr.seed == seed
        });
        if !continues {
            if t != 1 {
                return Err(parse_err(path, line, format!("episode starts at t = {t}")));
            }
            traces.push(RegretTrace {
                label,
                sparsity,
                seed,
                inst_regret: Vec::new(),
                cum_regret: Vec::new(),
                levels: Vec::new(),
                chosen: Vec::new(),
                wall_seconds: 0.0,
                potential_sum: 0.0,
                final_log_det: 0.0,
            });
        }
        let tr = traces.last_mut().expect("pushed above");
        if t != tr.inst_regret.len() + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected t = {}, found {t}", tr.inst_regret.len() + 1),
            ));
        }
        tr.inst_regret.push(inst);
        tr.cum_regret.push(cum);
        tr.levels.push(usize::try_from(level).ok());
    }
    Ok(traces)
}

/// Aggregates traces per `(sparsity, label)` in order of first appearance.
pub fn aggregate_traces(traces: &[RegretTrace]) -> Result<Vec<AggregateResult>> {
    let mut order: Vec<(usize, &str)> = Vec::new();
    let mut groups: BTreeMap<(usize, &str), Vec<&RegretTrace>> = BTreeMap::new();
    for tr in traces {
        let key = (tr.sparsity, tr.label.as_str());
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(tr);
    }
    order.iter().map(|k| aggregate(&groups[k])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub sparsity: usize,
    pub label: String,
    pub t: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Rows at every `stride`-th round and at the final round.
pub fn plot_rows(aggregates: &[AggregateResult], stride: usize) -> Result<Vec<PlotRow>> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let mut rows = Vec::new();
    for agg in aggregates {
        let horizon = agg.mean.len();
        for t in 1..=horizon {
            if t % stride == 0 || t == horizon {
                let (m, s) = (agg.mean[t - 1], agg.std[t - 1]);
                rows.push(PlotRow {
                    sparsity: agg.sparsity,
                    label: agg.label.clone(),
                    t,
                    mean: m,
                    lower: m - s,
                    upper: m + s,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_plot_rows<W: Write>(w: &mut W, rows: &[PlotRow]) -> Result<()> {
    writeln!(w, "{PLOTDATA_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.sparsity,
            r.label,
            r.t,
            fmt_f(r.mean),
            fmt_f(r.lower),
            fmt_f(r.upper)
        )?;
    }
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// A standalone SVG of the curves for one sparsity level: one line per
/// policy with a shaded ±1 std band.
pub fn render_svg(sparsity: usize, rows: &[PlotRow]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 30.0, 50.0);
    let rows: Vec<&PlotRow> = rows.iter().filter(|r| r.sparsity == sparsity).collect();
    let mut labels: Vec<&str> = Vec::new();
    for r in &rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let t_max = rows.iter().map(|r| r.t).max().unwrap_or(1).max(1) as f64;
    let y_max = rows
        .iter()
        .map(|r| r.upper)
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let px = |t: usize| left + (w - left - right) * t as f64 / t_max;
    let py = |y: f64| h - bottom - (h - top - bottom) * y.max(0.0) / y_max;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle">S = {sparsity}</text>"#,
        (left + w - right) / 2.0
    );
    let (x0, x1, y0, y1) = (px(0), px(t_max as usize), py(0.0), py(y_max));
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let (tx, ty) = (px((t_max * frac) as usize), py(y_max * frac));
        let _ = writeln!(
            svg,
            r#"<text x="{tx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            (t_max * frac).round()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            x0 - 6.0,
            ty + 4.0,
            y_max * frac
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">round t</text>"#,
        (x0 + x1) / 2.0,
        h - 12.0
    );
    for (i, label) in labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<&&PlotRow> = rows.iter().filter(|r| r.label == *label).collect();
        let mut band = String::new();
        for r in &pts {
            let _ = write!(band, "{:.1},{:.1} ", px(r.t), py(r.upper));
        }
        for r in pts.iter().rev() {
            let _ = write!(band, "{:.1},{:.1} ", px(r.t), py(r.lower));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.1},{:.1}", px(r.t), py(r.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 20.0 * i as f64 + 10.0;
        let lx = w - right + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{label}</text>"#,
            lx + 26.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads a traces file and writes the downsampled curves to `out`. With
/// `svg_dir`, also writes `regret_S{s}.svg` per sparsity level.
pub fn cmd_plotdata(
    traces_path: &Path,
    stride: usize,
    out: &Path,
    svg_dir: Option<&Path>,
) -> Result<Vec<PlotRow>> {
    let file = File::open(traces_path)?;
    let traces = read_traces(
        std::io::BufReader::new(file),
        &traces_path.display().to_string(),
    )?;
    let aggregates = aggregate_traces(&traces)?;
    let rows = plot_rows(&aggregates, stride)?;
    let mut w = BufWriter::new(File::create(out)?);
    write_plot_rows(&mut w, &rows)?;
    w.flush()?;
    if let Some(dir) = svg_dir {
        fs::create_dir_all(dir)?;
        let mut levels: Vec<usize> = rows.iter().map(|r| r.sparsity).collect();
        levels.dedup();
        levels.sort_unstable();
        levels.dedup();
        for s in levels {
            fs::write(dir.join(format!("regret_S{s}.svg")), render_svg(s, &rows))?;
        }
    }
    Ok(rows)
}

/// One line of the selftest report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, bound: f64) -> Check {
    Check {
        name,
        passed: worst <= bound,
        detail: format!("worst {worst:.3e}, bound {bound:.1e}"),
    }
}

fn shrink(v: Vector, rng: &mut ChaCha8Rng) -> Vector {
    let scale: f64 = rng.random();
    v * scale
}

/// Invariant checks on `episodes` random instances.
pub fn selftest(seed: u64, episodes: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inv_err = 0.0_f64;
    let mut rls_err = 0.0_f64;
    let mut det_err = 0.0_f64;
    let mut potential_gap = f64::NEG_INFINITY;
    let mut trace_gap = f64::NEG_INFINITY;
    for e in 0..episodes {
        let dim = [2, 4, 8][e % 3];
        let rounds = 300;
        let mut state = CovarianceState::new(dim)?;
        let mut v = DMatrix::<f64>::identity(dim, dim);
        let mut b = Vector::zeros(dim);
        for _ in 0..rounds {
            let a = shrink(sample_unit_sphere(dim, &mut rng), &mut rng);
            let x: f64 = rng.random_range(-2.0..2.0);
            let log_det_before = state.log_det();
            let q = state.observe(&a, x)?;
            det_err = det_err.max((state.log_det() - log_det_before - q.ln_1p()).abs());
            v += &a * a.transpose();
            b += &a * x;
        }
        let inv = v
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::corrupt("design matrix not invertible"))?;
        inv_err = inv_err.max((state.v_inv() - &inv).abs().max());
        let direct = v
            .clone()
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::corrupt("design matrix not invertible"))?;
        rls_err = rls_err.max((state.theta_hat() - direct).abs().max());
        potential_gap = potential_gap.max(state.potential_sum() - 2.0 * state.log_det());
        trace_gap = trace_gap
            .max(state.log_det() - dim as f64 * (1.0 + rounds as f64 / dim as f64).ln());
    }

    let mut config = ExperimentConfig::new(
        4,
        200,
        vec![
            PolicySpec::new("oful", PolicyKindSpec::Oful),
            PolicySpec::new("sparse", PolicyKindSpec::SparseLinucb),
            PolicySpec::new("ada", PolicyKindSpec::AdaLinucb),
        ],
    );
    config.k_actions = 8;
    config.repetitions = 2;
    config.sparsity = vec![2];
    config.seed = seed;
    let first = run_experiment(&config)?;
    let second = run_experiment(&config)?;
    let same = first.traces.len() == second.traces.len()
        && first
            .traces
            .iter()
            .zip(&second.traces)
            .all(|(a, b)| a.cum_regret == b.cum_regret && a.chosen == b.chosen);
    let monotone = first
        .traces
        .iter()
        .all(|tr| tr.cum_regret.windows(2).all(|w| w[1] >= w[0]));

    Ok(vec![
        check("maintained inverse vs direct inverse", inv_err, 1e-8),
        check("least-squares estimate vs direct solve", rls_err, 1e-7),
        check("determinant lemma per update", det_err, 1e-8),
        check("elliptic potential <= 2 ln det V", potential_gap, 0.0),
        check("ln det V <= d ln(1 + T/d)", trace_gap, 0.0),
        Check {
            name: "cumulative regret nondecreasing",
            passed: monotone,
            detail: format!("{} traces", first.traces.len()),
        },
        Check {
            name: "seeded reruns identical",
            passed: same,
            detail: format!("{} traces", first.traces.len()),
        },
    ])
}
