//! Persistence: the `SSKM` binary matrix format, CSV matrices and reports,
//! SVG decay charts, run manifests and TOML run configs.
//!
//! `SSKM` layout (all little-endian):
//!
//! ```text
//! b"SSKM" | u32 version = 1 | u64 rows | u64 cols | rows*cols f64, row-major
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conclab::ConcentrationReport;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::subspace::{make_subspace, Subspace, ORTHONORMAL_TOLERANCE};

pub const SSKM_MAGIC: &[u8; 4] = b"SSKM";
pub const SSKM_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode_sskm(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.data().len());
    out.extend_from_slice(SSKM_MAGIC);
    out.extend_from_slice(&SSKM_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_sskm(bytes: &[u8]) -> Result<Matrix> {
    let parse = |msg: String| Error::Parse(msg);
    if bytes.len() < HEADER_LEN || &bytes[..4] != SSKM_MAGIC {
        return Err(parse("not an SSKM matrix (bad magic or truncated header)".into()));
    }
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SSKM_VERSION {
        return Err(parse(format!("unsupported SSKM version {version}")));
    }
    let (rows, cols) = (u64_at(8), u64_at(16));
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| usize::try_from(b).ok())
        .ok_or_else(|| parse(format!("SSKM shape {rows}x{cols} overflows")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(parse(format!("SSKM body has {} bytes, shape {rows}x{cols} needs {expected}", body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Matrix::new(rows as usize, cols as usize, data).map_err(|e| parse(format!("SSKM payload: {e}")))
}

/// One row per line, comma-separated, shortest round-trip float formatting.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|x| x.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Matrix::from_rows(&refs).map_err(|e| Error::Parse(e.to_string()))
}

/// Write to a sibling temp file, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_dir(path);
    let name = path.file_name().ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes `m` as SSKM, or as CSV when the extension is `.csv`.
pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    if is_csv(path) {
        atomic_write(path, matrix_to_csv(m).as_bytes())
    } else {
        atomic_write(path, &encode_sskm(m))
    }
}

/// Reads SSKM (detected by magic) or CSV.
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let bytes = read(path)?;
    if bytes.starts_with(SSKM_MAGIC) {
        return decode_sskm(&bytes);
    }
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Parse(format!("{}: neither SSKM nor text", path.display())))?;
    matrix_from_csv(text).map_err(|e| in_file(path, e))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn save_subspace(path: &Path, x: &Subspace) -> Result<()> {
    save_matrix(path, x.basis())
}

/// Loads a basis; one that is not orthonormal to 1e-10 is orthonormalized.
pub fn load_subspace(path: &Path) -> Result<Subspace> {
    let m = load_matrix(path)?;
    if m.cols() > m.rows() {
        return Err(Error::Parse(format!(
            "{}: {}x{} has more columns than rows",
            path.display(),
            m.rows(),
            m.cols()
        )));
    }
    if m.orthonormality_error() <= ORTHONORMAL_TOLERANCE {
        Subspace::from_orthonormal(m)
    } else {
        make_subspace(&m)
    }
}

pub const REPORT_CSV_HEADER: &str = "lemma,n,trials,failures,p_hat,wilson_lo,wilson_hi";

/// `trials` is the number of trials that entered the rate.
pub fn report_to_csv(report: &ConcentrationReport) -> String {
    let lemma = report.config.lemma.id();
    let mut s = String::from(REPORT_CSV_HEADER);
    s.push('\n');
    for c in &report.cells {
        let _ = writeln!(s, "{lemma},{},{},{},{},{},{}", c.n, c.valid, c.failures, c.p_hat, c.wilson_lo, c.wilson_hi);
    }
    if let Some(fit) = &report.fit {
        let _ = writeln!(s, "#fit slope={} intercept={} r2={}", fit.slope, fit.intercept, fit.r2);
    }
    s
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 500.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

/// Line chart of `p̂` against `n` on a log-scale y axis, with the fitted
/// decay line dashed. Zero rates are drawn as hollow markers on the floor.
pub fn report_to_svg(report: &ConcentrationReport) -> String {
    let cells = &report.cells;
    let positive: Vec<f64> = cells.iter().map(|c| c.p_hat).filter(|&p| p > 0.0).collect();
    let n_min = cells.iter().map(|c| c.n).min().unwrap_or(0) as f64;
    let n_max = cells.iter().map(|c| c.n).max().unwrap_or(1) as f64;
    let (n_lo, n_hi) = if n_max > n_min { (n_min, n_max) } else { (n_min - 1.0, n_min + 1.0) };

    let floor = positive.iter().cloned().fold(1.0_f64, f64::min).min(
        cells.iter().filter(|c| c.valid > 0).map(|c| 0.5 / c.valid as f64).fold(1.0, f64::min),
    );
    let y_lo = floor.log10().floor();
    let y_hi = positive.iter().cloned().fold(floor, f64::max).log10().ceil().max(y_lo + 1.0);

    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let px = |n: f64| MARGIN_L + (n - n_lo) / (n_hi - n_lo) * plot_w;
    let py = |p: f64| MARGIN_T + (y_hi - p.max(10f64.powf(y_lo)).log10()) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_W} {SVG_H}" width="{SVG_W}" height="{SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{SVG_W}" height="{SVG_H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{} failure rate vs n (eps = {})</text>"#,
        SVG_W / 2.0,
        report.config.lemma.id(),
        report.config.epsilon
    );
    let (x0, x1, y0, y1) = (MARGIN_L, SVG_W - MARGIN_R, MARGIN_T, SVG_H - MARGIN_B);
    let _ = writeln!(s, r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" fill="none" stroke="black"/>"#);

    let mut decade = y_lo as i32;
    while decade as f64 <= y_hi {
        let y = py(10f64.powi(decade));
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{decade}</text>"#, x0 - 6.0, y + 4.0);
        decade += 1;
    }
    for c in cells {
        let x = px(c.n as f64);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, y1 + 18.0, c.n);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, (x0 + x1) / 2.0, SVG_H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">p_hat (log scale)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    let pts: Vec<(f64, f64)> = cells.iter().filter(|c| c.p_hat > 0.0).map(|c| (px(c.n as f64), py(c.p_hat))).collect();
    if pts.len() > 1 {
        let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, d.join(" "));
    }
    for c in cells {
        let x = px(c.n as f64);
        if c.p_hat > 0.0 {
            let (ylo, yhi) = (py(c.wilson_lo), py(c.wilson_hi));
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{ylo:.2}" x2="{x:.2}" y2="{yhi:.2}" stroke="#1f77b4"/>"##);
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{:.2}" r="4" fill="#1f77b4"/>"##, py(c.p_hat));
        } else {
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y1:.2}" r="4" fill="none" stroke="#1f77b4"/>"##);
        }
    }
    if let Some(fit) = &report.fit {
        let p = |n: f64| (fit.intercept + fit.slope * n).exp();
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-width="1.5" stroke-dasharray="6 4"/>"##,
            px(n_lo),
            py(p(n_lo)).clamp(y0, y1),
            px(n_hi),
            py(p(n_hi)).clamp(y0, y1)
        );
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" text-anchor="end" fill="#d62728">fit: ln p = {:.4} {} {:.5} n, r2 = {:.3}</text>"##,
            x1,
            y0 + 14.0,
            fit.intercept,
            if fit.slope < 0.0 { '-' } else { '+' },
            fit.slope.abs(),
            fit.r2
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputFile>,
}

/// Collects output files during a command and writes the manifest last.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    master_seed: Option<u64>,
    started_at: String,
    outputs: Vec<OutputFile>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl ManifestBuilder {
    pub fn start(command: &str, config: serde_json::Value, master_seed: Option<u64>) -> Self {
        ManifestBuilder { command: command.into(), config, master_seed, started_at: now(), outputs: Vec::new() }
    }

    /// Atomically writes `bytes` to `path` and records its hash.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        atomic_write(path, bytes)?;
        self.record(path, bytes);
        Ok(())
    }

    pub fn record(&mut self, path: &Path, bytes: &[u8]) {
        let sha256 = sha256_hex(bytes);
        match self.outputs.iter_mut().find(|o| o.path == path) {
            Some(o) => o.sha256 = sha256,
            None => self.outputs.push(OutputFile { path: path.to_path_buf(), sha256 }),
        }
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config: self.config,
            master_seed: self.master_seed,
            started_at: self.started_at,
            finished_at: now(),
            outputs: self.outputs,
        }
    }

    /// Writes the manifest; output paths are stored relative to its
    /// directory when they lie beneath it, absolute otherwise.
    pub fn finish_to(self, path: &Path) -> Result<RunManifest> {
        let mut manifest = self.finish();
        let base = fs::canonicalize(parent_dir(path))?;
        for o in &mut manifest.outputs {
            let abs = fs::canonicalize(&o.path)?;
            o.path = abs.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(abs);
        }
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        atomic_write(path, json.as_bytes())?;
        Ok(manifest)
    }
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Re-hashes every output listed in the manifest at `path`; returns the
/// entries whose contents differ.
pub fn verify_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let manifest: RunManifest = read_json(path)?;
    let base = parent_dir(path);
    let mut bad = Vec::new();
    for o in &manifest.outputs {
        if sha256_hex(&fs::read(base.join(&o.path))?) != o.sha256 {
            bad.push(o.path.clone());
        }
    }
    Ok(bad)
}

/// `[verify]` section of a run config file; every key optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub lemma: Option<String>,
    pub ambient: Option<usize>,
    pub n: Option<Vec<usize>>,
    pub d1: Option<usize>,
    pub d2: Option<usize>,
    pub cosines: Option<Vec<f64>>,
    pub haar: Option<bool>,
    pub l: Option<usize>,
    pub epsilon: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub tail_offset: Option<f64>,
    pub threads: Option<usize>,
}

/// `[plan]` section of a run config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub d: Option<usize>,
    pub l: Option<usize>,
    pub epsilon: Option<f64>,
    pub target: Option<f64>,
    pub calibration: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub plan: PlanSection,
}

pub fn parse_config(text: &str) -> Result<RunConfigFile> {
    toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
}

pub fn load_config(path: &Path) -> Result<RunConfigFile> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse(format!("{}: not UTF-8", path.display())))?;
    parse_config(&text).map_err(|e| in_file(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conclab::{ExperimentConfig, LemmaId, ReportCell, Spectrum};

    fn awkward() -> Matrix {
        Matrix::new(2, 3, vec![0.1, -0.0, 1e-300, f64::MAX, 1.0 / 3.0, -2.5e17]).unwrap()
    }

    #[test]
    fn sskm_layout_and_round_trip() {
        let m = awkward();
        let b = encode_sskm(&m);
        assert_eq!(&b[..4], b"SSKM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 3);
        assert_eq!(b.len(), 24 + 48);
        assert_eq!(f64::from_le_bytes(b[24..32].try_into().unwrap()), 0.1);
        let back = decode_sskm(&b).unwrap();
        let bits = |m: &Matrix| m.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn sskm_rejects_corruption() {
        let b = encode_sskm(&awkward());
        assert!(matches!(decode_sskm(&b[..30]), Err(Error::Parse(_))));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_sskm(&bad).is_err());
        let mut v2 = b.clone();
        v2[4] = 2;
        assert!(decode_sskm(&v2).is_err());
        let mut nan = b;
        nan[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_sskm(&nan).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let m = awkward();
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(
            back.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            m.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert!(matrix_from_csv("1,2\n3\n").is_err());
        assert!(matrix_from_csv("1,x\n").is_err());
    }

    #[test]
    fn files_and_subspaces() {
        let dir = tempfile::tempdir().unwrap();
        let x = crate::subspace::generate_random_subspace(12, 3, 5).unwrap();
        for name in ["x.sskm", "x.csv"] {
            let p = dir.path().join(name);
            save_subspace(&p, &x).unwrap();
            assert_eq!(load_subspace(&p).unwrap(), x);
        }
        let raw = dir.path().join("raw.csv");
        fs::write(&raw, "1,1\n0,1\n0,0\n").unwrap();
        let s = load_subspace(&raw).unwrap();
        assert!(s.basis().orthonormality_error() < 1e-12);
        assert!(matches!(load_subspace(&dir.path().join("missing")), Err(Error::Parse(_))));
    }

    fn report() -> ConcentrationReport {
        let config = ExperimentConfig {
            ambient: 100,
            n_grid: vec![10, 20, 30],
            d1: 2,
            d2: 2,
            spectrum: Spectrum::Haar,
            l_count: 2,
            epsilon: 0.3,
            trials: 100,
            master_seed: 1,
            lemma: LemmaId::Thm2,
            tail_offset: 0.0,
        };
        let cells = vec![
            ReportCell::from_counts(10, 100, 40, 0),
            ReportCell::from_counts(20, 100, 12, 0),
            ReportCell::from_counts(30, 100, 0, 0),
        ];
        ConcentrationReport::new(config, cells)
    }

    #[test]
    fn report_csv_schema() {
        let csv = report_to_csv(&report());
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("thm2,10,100,40,0.4,"));
        assert!(lines[4].starts_with("#fit slope=-"));
    }

    #[test]
    fn svg_has_fixed_viewbox_and_dashed_fit() {
        let svg = report_to_svg(&report());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(r#"viewBox="0 0 800 500""#));
        assert!(svg.contains("stroke-dasharray"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn manifest_hashes_match() {
        let dir = tempfile::tempdir().unwrap();
        let mut mb = ManifestBuilder::start("test", serde_json::json!({"k": 1}), Some(3));
        let p = dir.path().join("a.txt");
        mb.write(&p, b"hello").unwrap();
        let mp = dir.path().join("manifest.json");
        let m = mb.finish_to(&mp).unwrap();
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].path, Path::new("a.txt"));
        assert_eq!(m.outputs[0].sha256, "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
        assert!(verify_manifest(&mp).unwrap().is_empty());
        fs::write(&p, b"changed").unwrap();
        assert_eq!(verify_manifest(&mp).unwrap(), vec![PathBuf::from("a.txt")]);
    }

    #[test]
    fn config_sections() {
        let c = parse_config("[verify]\nlemma = \"thm2\"\nn = [32, 64]\nepsilon = 0.2\n\n[plan]\nd = 4\n").unwrap();
        assert_eq!(c.verify.lemma.as_deref(), Some("thm2"));
        assert_eq!(c.verify.n, Some(vec![32, 64]));
        assert_eq!(c.plan.d, Some(4));
        assert!(parse_config("[verify]\nbogus = 1\n").is_err());
        assert_eq!(parse_config("").unwrap(), RunConfigFile::default());
    }
}
