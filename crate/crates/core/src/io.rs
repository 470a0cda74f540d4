//! Trajectory archives: a CSV of recorded rows plus a JSON sidecar.
//!
//! The CSV carries one row per recorded time per urn under the header
//! `t,urn,Z,Zbar,D,L`, with urn ids 1-based (library APIs index urns from
//! 0; files follow the usual 1-based labeling). Floats are printed with 17
//! significant digits, which round-trips every f64 bit pattern: reading a
//! file back and rewriting it reproduces identical bytes. The sidecar
//! records parameters, seeds, and the recording grid — everything needed to
//! regenerate or validate the CSV.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::trajectory::Trajectory;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "t,urn,Z,Zbar,D,L";

/// 17 significant digits: enough to reconstruct the exact f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Companion metadata for one trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub n: u32,
    pub a: u32,
    pub b: u32,
    pub alpha: f64,
    /// The replica's own stream seed.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<u64>,
    pub record_times: Vec<u64>,
    /// Hash of the experiment configuration that produced the file, when
    /// one was involved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl TrajectorySidecar {
    pub fn for_trajectory(
        traj: &Trajectory,
        master_seed: Option<u64>,
        replica: Option<u64>,
        config_hash: Option<String>,
    ) -> Self {
        let p = traj.params();
        TrajectorySidecar {
            n: p.n_raw(),
            a: p.a_raw(),
            b: p.b_raw(),
            alpha: p.alpha(),
            seed: traj.seed(),
            master_seed,
            replica,
            record_times: traj.record_times().to_vec(),
            config_hash,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.n, self.a, self.b, self.alpha)
    }
}

/// Writes the recorded rows as CSV.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    let n = traj.params().n();
    writeln!(w, "{CSV_HEADER}")?;
    for row in 0..traj.len() {
        let t = traj.record_times()[row];
        let zbar = format_float(traj.zbar_at(row));
        for j in 0..n {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                t,
                j + 1,
                format_float(traj.z_at(row, j)),
                zbar,
                format_float(traj.d_at(row, j)),
                format_float(traj.l_at(row, j)),
            )?;
        }
    }
    Ok(())
}

/// Parses a trajectory CSV produced by [`write_trajectory_csv`], validating
/// shape and row invariants against the sidecar metadata.
pub fn read_trajectory_csv<R: BufRead>(r: R, sidecar: &TrajectorySidecar) -> Result<Trajectory> {
    let params = sidecar.params()?;
    let n = params.n();
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h == CSV_HEADER => {}
        Some(Ok(h)) => {
            return Err(Error::Parse(format!(
                "unexpected CSV header {h:?}; want {CSV_HEADER:?}"
            )))
        }
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::Parse("empty trajectory file".into())),
    }

    let rows = sidecar.record_times.len();
    let mut times = Vec::with_capacity(rows);
    let mut zbar = Vec::with_capacity(rows);
    let mut z = Vec::with_capacity(rows * n);
    let mut d = Vec::with_capacity(rows * n);
    let mut l = Vec::with_capacity(rows * n);

    let mut lineno = 1usize;
    let mut urn_expected = 1usize;
    for line in lines {
        let line = line?;
        lineno += 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next_field = |what: &str| {
            fields
                .next()
                .ok_or_else(|| Error::Parse(format!("line {lineno}: missing {what}")))
        };
        let t: u64 = next_field("t")?
            .parse()
            .map_err(|e| Error::Parse(format!("line {lineno}: bad t: {e}")))?;
        let urn: usize = next_field("urn")?
            .parse()
            .map_err(|e| Error::Parse(format!("line {lineno}: bad urn: {e}")))?;
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::Parse(format!("line {lineno}: bad {what}: {e}")))
        };
        let z_v = parse_f(next_field("Z")?, "Z")?;
        let zbar_v = parse_f(next_field("Zbar")?, "Zbar")?;
        let d_v = parse_f(next_field("D")?, "D")?;
        let l_v = parse_f(next_field("L")?, "L")?;
        if fields.next().is_some() {
            return Err(Error::Parse(format!("line {lineno}: too many fields")));
        }

        if urn != urn_expected {
            return Err(Error::Parse(format!(
                "line {lineno}: urn {urn} out of order (expected {urn_expected})"
            )));
        }
        if urn == 1 {
            times.push(t);
            zbar.push(zbar_v);
        } else if *times.last().unwrap() != t || zbar[zbar.len() - 1] != zbar_v {
            return Err(Error::Parse(format!(
                "line {lineno}: row fields disagree with urn 1's"
            )));
        }
        z.push(z_v);
        d.push(d_v);
        l.push(l_v);
        urn_expected = if urn == n { 1 } else { urn + 1 };
    }
    if urn_expected != 1 {
        return Err(Error::Parse("trajectory file ends mid-row".into()));
    }
    if times != sidecar.record_times {
        return Err(Error::Parse(
            "recorded times disagree with the sidecar grid".into(),
        ));
    }
    Trajectory::from_columns(params, sidecar.seed, times, zbar, z, d, l)
}

/// `replica_000042` style basename shared by the CSV/JSON pair.
pub fn replica_basename(replica: u64) -> String {
    format!("replica_{replica:06}")
}

pub fn trajectory_paths(dir: &Path, replica: u64) -> (PathBuf, PathBuf) {
    let base = replica_basename(replica);
    (
        dir.join(format!("{base}.csv")),
        dir.join(format!("{base}.json")),
    )
}

/// Writes the CSV/JSON pair for one replica.
pub fn write_trajectory_files(
    dir: &Path,
    replica: u64,
    traj: &Trajectory,
    sidecar: &TrajectorySidecar,
) -> Result<()> {
    let (csv_path, json_path) = trajectory_paths(dir, replica);
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    write_trajectory_csv(&mut csv, traj)?;
    csv.flush()?;
    let mut json = BufWriter::new(File::create(&json_path)?);
    serde_json::to_writer_pretty(&mut json, sidecar)
        .map_err(|e| Error::Parse(format!("sidecar encode: {e}")))?;
    json.write_all(b"\n")?;
    json.flush()?;
    Ok(())
}

/// Reads the CSV/JSON pair for one replica back.
pub fn read_trajectory_files(dir: &Path, replica: u64) -> Result<(Trajectory, TrajectorySidecar)> {
    let (csv_path, json_path) = trajectory_paths(dir, replica);
    let sidecar: TrajectorySidecar =
        serde_json::from_reader(BufReader::new(File::open(&json_path).map_err(|e| {
            Error::Parse(format!("cannot open sidecar {}: {e}", json_path.display()))
        })?))
        .map_err(|e| Error::Parse(format!("sidecar {}: {e}", json_path.display())))?;
    let csv = BufReader::new(File::open(&csv_path).map_err(|e| {
        Error::Parse(format!(
            "cannot open trajectory {}: {e}",
            csv_path.display()
        ))
    })?);
    let traj = read_trajectory_csv(csv, &sidecar)?;
    Ok((traj, sidecar))
}
