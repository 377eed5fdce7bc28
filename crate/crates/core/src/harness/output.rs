use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::RunStatus;
use crate::digraph::SpectralProfile;
use crate::error::{Error, Result};

/// One trace CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub psi_z: f64,
    pub psi_x: f64,
    pub bits_cum: u64,
    /// Suboptimality `f(x̄) − f*` when `f*` is known, else `f(x̄)`.
    pub objective: Option<f64>,
    pub status: RunStatus,
    pub objective_mean: Option<f64>,
    /// `f(z_0)`, the objective seen by agent 0.
    pub objective_agent0: Option<f64>,
}

/// One sweep CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub omega: f64,
    pub gamma_policy: String,
    /// Set only when `status` is `converged`.
    pub rounds_to_eps: Option<u64>,
    pub status: RunStatus,
    pub seed: u64,
    pub gamma: f64,
}

pub fn write_rows<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Write `bytes` to `path` through a temporary sibling and a rename, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn load_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows(f)
}

/// Spectral quantities recorded for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestProfile {
    pub beta: f64,
    pub delta: Option<f64>,
    pub big_c: Option<f64>,
    pub kappa: Option<f64>,
    pub horizon: Option<usize>,
    pub phi: Option<Vec<f64>>,
}

impl ManifestProfile {
    pub fn new(beta: f64, profile: Option<&SpectralProfile>) -> Self {
        Self {
            beta,
            delta: profile.map(|p| p.delta),
            big_c: profile.map(|p| p.big_c),
            kappa: profile.map(|p| p.kappa),
            horizon: profile.map(|p| p.horizon),
            phi: profile.map(|p| p.phi.clone()),
        }
    }
}

/// Everything needed to reproduce an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub omega: f64,
    pub gamma: f64,
    pub eta: f64,
    pub rho: Option<f64>,
    pub spectral: ManifestProfile,
    pub f_star: Option<f64>,
    /// Output files, relative to the manifest's directory.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::parse("manifest", e.to_string()))?;
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse("manifest", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_csv_header_and_round_trip() {
        let rows = vec![
            TraceRow {
                t: 0,
                psi_z: 1.25,
                psi_x: 0.1 + 0.2,
                bits_cum: 0,
                objective: None,
                status: RunStatus::Running,
                objective_mean: None,
                objective_agent0: None,
            },
            TraceRow {
                t: 1,
                psi_z: 1e-300,
                psi_x: 3.0f64.sqrt(),
                bits_cum: 12345678901,
                objective: Some(-0.5),
                status: RunStatus::Converged,
                objective_mean: Some(std::f64::consts::LN_2),
                objective_agent0: Some(1.0 / 3.0),
            },
        ];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "t,psi_z,psi_x,bits_cum,objective,status,objective_mean,objective_agent0\n"
        ));
        assert_eq!(read_rows::<TraceRow, _>(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn sweep_csv_round_trip() {
        let rows = vec![
            SweepRow {
                n: 20,
                omega: 0.01,
                gamma_policy: "omega".into(),
                rounds_to_eps: Some(123),
                status: RunStatus::Converged,
                seed: 0,
                gamma: 0.01,
            },
            SweepRow {
                n: 50,
                omega: 0.1,
                gamma_policy: "manual:1".into(),
                rounds_to_eps: None,
                status: RunStatus::Diverged,
                seed: 3,
                gamma: 1.0,
            },
        ];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("n,omega,gamma_policy,rounds_to_eps,status"));
        assert_eq!(read_rows::<SweepRow, _>(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.csv");
        write_atomic(&path, b"a,b\n").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"a,b\n");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
