//! Run configuration and plot-ready output files.
//!
//! Configuration is a flat `key = value` file; `#` starts a comment. Every
//! emitted CSV begins with a `# schema: <name>/v<n>` comment line followed
//! by a header row. Files are written to a temporary sibling and renamed
//! into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{CurveSample, Plate};
use crate::gaussian::{BellState, BellStateSpec};
use crate::pulse::{self, DetectorConfig};

pub const CURVES_SCHEMA: &str = "bellpol.curves/v1";
pub const SWEEP_SCHEMA: &str = "bellpol.sweep/v1";
pub const PULSES_SCHEMA: &str = "bellpol.pulses/v1";
pub const RESIDUALS_SCHEMA: &str = "bellpol.fit-residuals/v1";

/// `(key, description)` for every accepted configuration key.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("state", "Bell state: psi+, psi-, phi+ or phi-"),
    ("eta", "overall detection efficiency in [0, 1]"),
    ("gain", "parametric gain Γ (exclusive with nbar)"),
    ("nbar", "mean photon number per mode N = sinh²Γ (exclusive with gain)"),
    ("modes", "independent quadruples per pulse M"),
    ("pulses", "pulses per Monte Carlo batch"),
    ("seed", "master RNG seed"),
    ("chunk_size", "pulses per RNG stream"),
    ("noise_sigma", "electronic noise per channel in photons, or 'auto'"),
    (
        "subtract_noise",
        "remove electronic noise using a dark record (true/false)",
    ),
    ("orders", "comma-separated DP orders, e.g. 1,2,4"),
    ("plate", "plate swept by the curves command: hwp or qwp"),
    ("points", "plate angles per curve"),
    ("step_h", "sphere sweep HWP step in degrees"),
    ("step_q", "sphere sweep QWP step in degrees"),
    ("chi_h", "HWP angle in degrees for simulate"),
    ("chi_q", "QWP angle in degrees for simulate"),
    ("mc", "add Monte Carlo columns/estimates (true/false)"),
    ("cutoff", "Fock cutoff for outcome tables (default: automatic)"),
    ("bins", "histogram bins for simulate"),
    ("refine_tol", "direction tolerance of the DP search in radians"),
    ("out", "output path (extension-less prefix or file)"),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSetting {
    Gain(f64),
    Nbar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSetting {
    /// Noise variance equal to 10% of the lossy singlet signal variance.
    Auto,
    Sigma(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub state: BellState,
    pub eta: f64,
    pub gain: GainSetting,
    pub modes: u32,
    pub pulses: usize,
    pub seed: u64,
    pub chunk_size: usize,
    pub noise: NoiseSetting,
    pub subtract_noise: bool,
    pub orders: Vec<usize>,
    pub plate: Plate,
    pub points: usize,
    pub step_h_deg: f64,
    pub step_q_deg: f64,
    pub chi_h_deg: f64,
    pub chi_q_deg: f64,
    pub mc: bool,
    pub cutoff: Option<usize>,
    pub bins: usize,
    pub refine_tol: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            state: BellState::PSI_PLUS,
            eta: 0.26,
            gain: GainSetting::Nbar(0.2),
            modes: pulse::DEFAULT_QUADRUPLES,
            pulses: pulse::DEFAULT_PULSES,
            seed: pulse::DEFAULT_SEED,
            chunk_size: pulse::DEFAULT_CHUNK_SIZE,
            noise: NoiseSetting::Auto,
            subtract_noise: true,
            orders: vec![1, 2, 4],
            plate: Plate::Hwp,
            points: 73,
            step_h_deg: 2.5,
            step_q_deg: 5.0,
            chi_h_deg: 0.0,
            chi_q_deg: 0.0,
            mc: false,
            cutoff: None,
            bins: 41,
            refine_tol: crate::metrics::DEFAULT_REFINE_TOL,
            out: None,
        }
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("'{v}': {e}"))
}

/// Comma-separated list of positive orders.
pub fn parse_orders(v: &str) -> std::result::Result<Vec<usize>, String> {
    let orders: Vec<usize> = v
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(parse_num::<usize>)
        .collect::<std::result::Result<_, _>>()?;
    if orders.is_empty() || orders.contains(&0) {
        return Err("orders must be a nonempty list of positive integers".into());
    }
    Ok(orders)
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "state" => self.state = v.parse().map_err(|e: Error| e.to_string())?,
            "eta" => self.eta = parse_num(v)?,
            "gain" => self.gain = GainSetting::Gain(parse_num(v)?),
            "nbar" => self.gain = GainSetting::Nbar(parse_num(v)?),
            "modes" => self.modes = parse_num(v)?,
            "pulses" => self.pulses = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            "chunk_size" => self.chunk_size = parse_num(v)?,
            "noise_sigma" => {
                self.noise = if v.eq_ignore_ascii_case("auto") {
                    NoiseSetting::Auto
                } else {
                    NoiseSetting::Sigma(parse_num(v)?)
                }
            }
            "subtract_noise" => self.subtract_noise = parse_bool(v)?,
            "orders" => self.orders = parse_orders(v)?,
            "plate" => self.plate = v.parse().map_err(|e: Error| e.to_string())?,
            "points" => self.points = parse_num(v)?,
            "step_h" => self.step_h_deg = parse_num(v)?,
            "step_q" => self.step_q_deg = parse_num(v)?,
            "chi_h" => self.chi_h_deg = parse_num(v)?,
            "chi_q" => self.chi_q_deg = parse_num(v)?,
            "mc" => self.mc = parse_bool(v)?,
            "cutoff" => {
                self.cutoff = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_num(v)?)
                }
            }
            "bins" => self.bins = parse_num(v)?,
            "refine_tol" => self.refine_tol = parse_num(v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Parses a configuration file body; `path` is used in error messages.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen_gain: Option<(&str, usize)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                path: path.to_string(),
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim();
            if key == "gain" || key == "nbar" {
                if let Some((prev, at)) = seen_gain {
                    if prev != key {
                        return Err(err(format!("'{key}' conflicts with '{prev}' on line {at}")));
                    }
                }
                seen_gain = Some((if key == "gain" { "gain" } else { "nbar" }, line_no));
            }
            cfg.set(key, value).map_err(err)?;
        }
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        self.detector()?.validate()?;
        if self.points < 2 {
            return Err(invalid("points must be >= 2"));
        }
        if self.bins < 2 {
            return Err(invalid("bins must be >= 2"));
        }
        if self.refine_tol.is_nan() || self.refine_tol <= 0.0 {
            return Err(invalid("refine_tol must be positive"));
        }
        if !(self.step_h_deg > 0.0 && self.step_q_deg > 0.0) {
            return Err(invalid("sweep steps must be positive"));
        }
        if self
            .orders
            .iter()
            .any(|k| *k == 0 || *k > crate::gaussian::DEFAULT_MAX_ORDER)
        {
            return Err(invalid(format!(
                "orders must lie in 1..={}",
                crate::gaussian::DEFAULT_MAX_ORDER
            )));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<BellStateSpec> {
        match self.gain {
            GainSetting::Gain(g) => BellStateSpec::from_gain(self.state, g, self.modes),
            GainSetting::Nbar(n) => BellStateSpec::from_nbar(self.state, n, self.modes),
        }
    }

    pub fn noise_sigma(&self) -> Result<f64> {
        Ok(match self.noise {
            NoiseSetting::Sigma(s) => s,
            NoiseSetting::Auto => pulse::default_noise_sigma(self.eta, self.spec()?.nbar(), self.modes),
        })
    }

    pub fn detector(&self) -> Result<DetectorConfig> {
        let d = DetectorConfig {
            eta: self.eta,
            electronic_noise_sigma: self.noise_sigma()?,
            pulses: self.pulses,
            seed: self.seed,
            chunk_size: self.chunk_size,
        };
        d.validate()?;
        Ok(d)
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("output path '{}' has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Io(format!("{}: {e}", path.display())));
    }
    Ok(())
}

/// CSV text with the schema line, header and rows.
pub fn csv_document(schema: &str, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut buf = format!("# schema: {schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Formats an optional number, leaving the cell empty when absent.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Reads `chi_degrees,nrf[,sigma]` rows; `#` lines are skipped.
pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_curve_csv(&text, &path.display().to_string())
}

pub fn parse_curve_csv(text: &str, path: &str) -> Result<Vec<CurveSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_string(),
        row,
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(0, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let chi = col("chi_degrees").ok_or_else(|| parse_err(0, "missing column 'chi_degrees'".into()))?;
    let nrf = col("nrf").ok_or_else(|| parse_err(0, "missing column 'nrf'".into()))?;
    let sigma = col("sigma");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let get = |c: usize, name: &str| -> Result<f64> {
            let s = rec
                .get(c)
                .ok_or_else(|| parse_err(row, format!("missing '{name}' value")))?;
            s.parse::<f64>()
                .map_err(|e| parse_err(row, format!("'{name}' = '{s}': {e}")))
        };
        let s = match sigma {
            Some(c) if rec.get(c).is_some_and(|v| !v.is_empty()) => {
                let v = get(c, "sigma")?;
                if v.is_nan() || v <= 0.0 {
                    return Err(parse_err(row, format!("sigma must be positive, got {v}")));
                }
                Some(v)
            }
            _ => None,
        };
        out.push(CurveSample {
            chi_degrees: get(chi, "chi_degrees")?,
            nrf: get(nrf, "nrf")?,
            sigma: s,
        });
    }
    if out.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    Ok(out)
}

/// One grid point of a sphere map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereMapRecord {
    pub chi_h_deg: f64,
    pub chi_q_deg: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// S2 component of the direction.
    pub x: f64,
    /// S1 component of the direction.
    pub y: f64,
    pub nrf: f64,
    /// Fourth central moment over the coherent-state value.
    pub m4_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereMap {
    pub schema: String,
    pub state: String,
    pub eta: f64,
    pub nbar: f64,
    pub modes: u32,
    pub step_h_deg: f64,
    pub step_q_deg: f64,
    pub records: Vec<SphereMapRecord>,
}

impl SphereMap {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                vec![
                    r.chi_h_deg.to_string(),
                    r.chi_q_deg.to_string(),
                    r.theta_deg.to_string(),
                    r.phi_deg.to_string(),
                    r.x.to_string(),
                    r.y.to_string(),
                    r.nrf.to_string(),
                    r.m4_normalized.to_string(),
                ]
            })
            .collect();
        csv_document(
            SWEEP_SCHEMA,
            &[
                "chi_H_deg",
                "chi_Q_deg",
                "theta_deg",
                "phi_deg",
                "x",
                "y",
                "nrf",
                "m4_normalized",
            ],
            &rows,
        )
    }
}

/// `path` with its extension replaced (or added).
pub fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.to_path_buf();
    p.set_extension(ext);
    p
}
