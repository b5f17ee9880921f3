use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qsm_core::{FidelitySeries, SeriesMeta};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, BTreeMap<String, String>>,
}

impl Provenance {
    pub fn new(command: String, seed: Option<u64>, config: BTreeMap<String, BTreeMap<String, String>>) -> Self {
        Self { tool: "qsm", version: env!("CARGO_PKG_VERSION"), command, seed, config }
    }
}

/// One numeric table with unit annotations per column.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn from_series(s: &FidelitySeries, time_unit: &str) -> Self {
        Table {
            columns: vec![
                ("t".into(), time_unit.into()),
                ("fidelity".into(), "dimensionless".into()),
                ("stderr".into(), "dimensionless".into()),
            ],
            rows: (0..s.len()).map(|i| vec![s.times[i], s.values[i], s.stderr[i]]).collect(),
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    provenance: &'a Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<&'a SeriesMeta>,
}

#[derive(Serialize)]
struct JsonArtifact<'a> {
    provenance: &'a Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<&'a SeriesMeta>,
    columns: BTreeMap<&'a str, &'a str>,
    header: Vec<&'a str>,
    rows: &'a [Vec<f64>],
}

fn to_io(e: impl std::error::Error + Send + Sync + 'static) -> io::Error {
    io::Error::other(e)
}

/// Write `stem.csv` plus `stem.json`, or a single `stem.json`. Returns the paths written.
pub fn write_table(dir: &Path, stem: &str, table: &Table, meta: Option<&SeriesMeta>, prov: &Provenance, format: Format) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        Format::Csv => {
            let csv_path = dir.join(format!("{stem}.csv"));
            let mut buf = Vec::new();
            let units: Vec<String> = table.columns.iter().map(|(c, u)| format!("{c} [{u}]")).collect();
            buf.extend_from_slice(format!("# units: {}\n", units.join(", ")).as_bytes());
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(table.columns.iter().map(|(c, _)| c.as_str())).map_err(to_io)?;
                for row in &table.rows {
                    w.write_record(row.iter().map(|v| v.to_string())).map_err(to_io)?;
                }
                w.flush()?;
            }
            fs::write(&csv_path, buf)?;
            let side = dir.join(format!("{stem}.json"));
            let body = serde_json::to_string_pretty(&Sidecar { provenance: prov, meta }).map_err(to_io)?;
            fs::write(&side, body + "\n")?;
            Ok(vec![csv_path, side])
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            let art = JsonArtifact {
                provenance: prov,
                meta,
                columns: table.columns.iter().map(|(c, u)| (c.as_str(), u.as_str())).collect(),
                header: table.columns.iter().map(|(c, _)| c.as_str()).collect(),
                rows: &table.rows,
            };
            fs::write(&path, serde_json::to_string_pretty(&art).map_err(to_io)? + "\n")?;
            Ok(vec![path])
        }
    }
}

/// Write an arbitrary JSON report with provenance attached.
pub fn write_report<T: Serialize>(dir: &Path, stem: &str, report: &T, prov: &Provenance) -> io::Result<PathBuf> {
    #[derive(Serialize)]
    struct Wrapped<'a, T> {
        provenance: &'a Provenance,
        #[serde(flatten)]
        report: &'a T,
    }
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(&Wrapped { provenance: prov, report }).map_err(to_io)?;
    fs::write(&path, body + "\n")?;
    Ok(path)
}

/// Read a `t,fidelity,stderr` CSV as written by [`write_table`].
pub fn read_series(path: &Path, n: usize) -> Result<FidelitySeries, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = rdr.headers().map_err(|e| format!("{}: {e}", path.display()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ti), Some(fi)) = (col("t"), col("fidelity")) else {
        return Err(format!("{}: expected columns t and fidelity", path.display()));
    };
    let si = col("stderr");
    let (mut t, mut f, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let num = |j: usize| -> Result<f64, String> {
            rec.get(j)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("{}: row {}: {e}", path.display(), i + 1))
        };
        t.push(num(ti)?);
        f.push(num(fi)?);
        s.push(match si {
            Some(j) => num(j)?,
            None => 0.0,
        });
    }
    let meta = SeriesMeta { engine: "file".into(), n, ..Default::default() };
    FidelitySeries::new(t, f, s, meta).map_err(|e| format!("{}: {e}", path.display()))
}
