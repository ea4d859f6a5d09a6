//! Serialization: models, result documents and CSV traces.
//!
//! Every float is written with 17 significant digits so it parses back to the
//! same bits. Every document carries a `meta` block (CSV: `#` header lines)
//! with the toolkit version, the config hash, the seed and the resolved config.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use smc_core::models::NonMarkovGauss;

use crate::error::CliError;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// `{:.16e}`; `NaN` and infinities use Rust's spelling, which `str::parse` accepts.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Compact JSON with 17-digit floats.
struct Exact;

impl serde_json::ser::Formatter for Exact {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
}

pub fn to_json_string(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Exact);
    v.serialize(&mut ser).expect("in-memory JSON");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// `null` for non-finite values, which JSON cannot carry.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| num(*x)).collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

// ------------------------------------------------------------------ models

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub phi: f64,
    pub q: f64,
    pub beta: f64,
    pub r: f64,
    pub d: usize,
    pub y: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_model(m: &NonMarkovGauss) -> Self {
        ModelFile { phi: m.phi, q: m.q, beta: m.beta, r: m.r, d: m.d, y: m.y.chunks(m.d).map(<[f64]>::to_vec).collect() }
    }

    pub fn to_model(&self) -> Result<NonMarkovGauss, CliError> {
        if self.y.iter().any(|row| row.len() != self.d) {
            return Err(CliError::config("invalid_model", "every row of y must have d entries"));
        }
        NonMarkovGauss::new(self.phi, self.q, self.beta, self.r, self.d, self.y.concat()).map_err(|e| CliError::config("invalid_model", e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "phi": num(self.phi), "q": num(self.q), "beta": num(self.beta), "r": num(self.r), "d": self.d,
            "y": self.y.iter().map(|row| nums(row)).collect::<Vec<_>>(),
        })
    }
}

/// Reads a model file; a missing file is `model_not_found`.
pub fn read_model(path: &Path) -> Result<(NonMarkovGauss, String), CliError> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::config("model_not_found", format!("{}", path.display())),
        _ => CliError::config("model_unreadable", format!("{}: {e}", path.display())),
    })?;
    let mf: ModelFile = serde_json::from_slice(&bytes).map_err(|e| CliError::config("invalid_model", e.to_string()))?;
    Ok((mf.to_model()?, sha256_hex(&bytes)))
}

pub fn write_model(m: &NonMarkovGauss) -> String {
    to_json_string(&ModelFile::from_model(m).to_json())
}

// ------------------------------------------------------------ provenance

/// Resolved configuration plus the seed it ran under.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub seed: u64,
    pub config: Value,
}

impl Provenance {
    pub fn new(seed: u64, config: Value) -> Self {
        Provenance { seed, config }
    }

    pub fn hash(&self) -> String {
        sha256_hex(to_json_string(&json!({ "seed": self.seed, "config": self.config })).as_bytes())
    }

    pub fn meta(&self) -> Value {
        json!({ "version": VERSION, "config_hash": self.hash(), "seed": self.seed, "config": self.config })
    }

    /// `body` with a `meta` entry added.
    pub fn document(&self, mut body: Value) -> Value {
        if let Value::Object(map) = &mut body {
            map.insert("meta".into(), self.meta());
        }
        body
    }

    pub fn csv_header(&self) -> String {
        format!(
            "# version={} config_hash={} seed={}\n# config={}\n",
            VERSION,
            self.hash(),
            self.seed,
            to_json_string(&self.config)
        )
    }
}

/// Rows of CSV cells, prefixed by the provenance comment lines.
pub fn csv_document(prov: &Provenance, header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).map_err(CliError::io)?;
    for r in rows {
        w.write_record(r).map_err(CliError::io)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| CliError::io(e.into_error()))?).expect("CSV is UTF-8");
    Ok(prov.csv_header() + &body)
}

pub fn cell(x: f64) -> String {
    fmt_f64(x)
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(CliError::io)?;
            }
            std::fs::write(p, text).map_err(CliError::io)
        }
        None => {
            let mut out = std::io::stdout().lock();
            let nl = if text.ends_with('\n') { "" } else { "\n" };
            match out.write_all(text.as_bytes()).and_then(|_| out.write_all(nl.as_bytes())) {
                // reader went away (`| head`): nothing left to do
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(CliError::io),
            }
        }
    }
}

/// Parses a CSV written by [`csv_document`], skipping provenance lines.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().map_err(CliError::io)?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|x| x.iter().map(String::from).collect())).collect::<Result<_, _>>().map_err(CliError::io)?;
    Ok((header, rows))
}
