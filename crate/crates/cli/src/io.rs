//! CSV and TOML file formats.
//!
//! IMU files have the header `t,sx,sy,sz,wx,wy,wz` (SI units, body frame,
//! specific force including the reaction to gravity). Truth files have
//! `t,rx,ry,rz,vx,vy,vz,yaw,pitch,roll,mode`. Floats are written in
//! shortest round-trip form, so reading back a written file is exact.

use std::fs::File;
use std::path::{Path, PathBuf};

use modebank::geometry::{EulerAngles, Vec3};
use modebank::learning::LearnReport;
use modebank::models::ModeIndex;
use modebank::pipeline::{ErrorMetrics, TrajectoryRow, TruthPoint};
use modebank::sim::TruthRecord;
use modebank::strapdown::{ImuSample, MAX_DT};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const IMU_HEADER: [&str; 7] = ["t", "sx", "sy", "sz", "wx", "wy", "wz"];
pub const TRUTH_HEADER: [&str; 11] = ["t", "rx", "ry", "rz", "vx", "vy", "vz", "yaw", "pitch", "roll", "mode"];

/// One line of a truth file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRow {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub euler: EulerAngles,
    pub mode: ModeIndex,
}

impl TruthRow {
    pub fn from_record(r: &TruthRecord) -> modebank::Result<Self> {
        Ok(TruthRow {
            t: r.t,
            position: r.state.position,
            velocity: r.state.velocity,
            euler: r.euler()?,
            mode: r.mode,
        })
    }

    pub fn point(&self) -> TruthPoint {
        TruthPoint {
            t: self.t,
            position: self.position,
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::parse(path, format!("{other:?}")),
    }
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Numeric records of a CSV file whose header must equal `expected`
/// (`None` accepts any header). Returns the header and rows.
fn read_numeric(path: &Path, expected: Option<&[&str]>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| CliError::parse(path, format!("cannot open: {e}")))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::parse(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if let Some(exp) = expected {
        if header != exp {
            return Err(CliError::parse(
                path,
                format!("expected header `{}`, found `{}`", exp.join(","), header.join(",")),
            ));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CliError::parse(path, format!("line {line}: {e}")))?;
        let values = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::parse(path, format!("line {line}: `{field}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok((header, rows))
}

fn check_times(path: &Path, times: impl Iterator<Item = f64>) -> Result<()> {
    let mut previous: Option<f64> = None;
    for (i, t) in times.enumerate() {
        if let Some(p) = previous {
            let dt = t - p;
            if !(dt > 0.0 && dt <= MAX_DT) {
                return Err(CliError::parse(
                    path,
                    format!("line {}: time step {dt} s is outside (0, {MAX_DT}]", i + 2),
                ));
            }
        }
        previous = Some(t);
    }
    Ok(())
}

fn mode_from(path: &Path, line: usize, value: f64) -> Result<ModeIndex> {
    if value >= 1.0 && value.fract() == 0.0 && value < 1e6 {
        Ok(ModeIndex::new(value as usize))
    } else {
        Err(CliError::parse(path, format!("line {line}: mode {value} is not a positive integer")))
    }
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>> {
    let (_, rows) = read_numeric(path, Some(&IMU_HEADER))?;
    if rows.is_empty() {
        return Err(CliError::parse(path, "no samples"));
    }
    check_times(path, rows.iter().map(|r| r[0]))?;
    Ok(rows
        .iter()
        .map(|r| ImuSample::new(r[0], Vec3::new(r[1], r[2], r[3]), Vec3::new(r[4], r[5], r[6])))
        .collect())
}

pub fn write_imu(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let header: Vec<String> = IMU_HEADER.iter().map(|s| s.to_string()).collect();
    write_rows(
        path,
        &header,
        samples.iter().map(|u| {
            let (s, w) = (u.specific_force, u.angular_rate);
            [u.t, s.x, s.y, s.z, w.x, w.y, w.z].iter().map(f64::to_string).collect()
        }),
    )
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    let (_, rows) = read_numeric(path, Some(&TRUTH_HEADER))?;
    if rows.is_empty() {
        return Err(CliError::parse(path, "no samples"));
    }
    check_times(path, rows.iter().map(|r| r[0]))?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(TruthRow {
                t: r[0],
                position: Vec3::new(r[1], r[2], r[3]),
                velocity: Vec3::new(r[4], r[5], r[6]),
                euler: EulerAngles::new(r[7], r[8], r[9]),
                mode: mode_from(path, i + 2, r[10])?,
            })
        })
        .collect()
}

pub fn write_truth(path: &Path, truth: &[TruthRow]) -> Result<()> {
    let header: Vec<String> = TRUTH_HEADER.iter().map(|s| s.to_string()).collect();
    write_rows(
        path,
        &header,
        truth.iter().map(|r| {
            let (p, v, e) = (r.position, r.velocity, r.euler);
            let mut out: Vec<String> =
                [r.t, p.x, p.y, p.z, v.x, v.y, v.z, e.yaw, e.pitch, e.roll].iter().map(f64::to_string).collect();
            out.push(r.mode.get().to_string());
            out
        }),
    )
}

fn trajectory_header(num_modes: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "rx", "ry", "rz", "vx", "vy", "vz", "yaw", "pitch", "roll", "map_mode"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=num_modes).map(|m| format!("p{m}")));
    h.push("loglik_increment".into());
    h
}

/// Trajectory file: `t,rx,ry,rz,vx,vy,vz,yaw,pitch,roll,map_mode,p1..pL,loglik_increment`.
pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let num_modes = rows.first().map_or(0, |r| r.mode_posterior.len());
    write_rows(
        path,
        &trajectory_header(num_modes),
        rows.iter().map(|r| {
            let (p, v, e) = (r.position, r.velocity, r.euler);
            let mut out: Vec<String> =
                [r.t, p.x, p.y, p.z, v.x, v.y, v.z, e.yaw, e.pitch, e.roll].iter().map(f64::to_string).collect();
            out.push(r.map_mode.get().to_string());
            out.extend(r.mode_posterior.iter().map(f64::to_string));
            out.push(r.loglik_increment.to_string());
            out
        }),
    )
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let (header, rows) = read_numeric(path, None)?;
    let num_modes = header.len().saturating_sub(12);
    if header != trajectory_header(num_modes) {
        return Err(CliError::parse(path, format!("unexpected trajectory header `{}`", header.join(","))));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(TrajectoryRow {
                t: r[0],
                position: Vec3::new(r[1], r[2], r[3]),
                velocity: Vec3::new(r[4], r[5], r[6]),
                euler: EulerAngles::new(r[7], r[8], r[9]),
                map_mode: mode_from(path, i + 2, r[10])?,
                mode_posterior: r[11..11 + num_modes].to_vec(),
                loglik_increment: r[11 + num_modes],
            })
        })
        .collect()
}

/// Per-sample series for plotting: speed, height and mode of the truth and
/// of both estimators.
pub fn write_plot_data(path: &Path, truth: &[TruthRow], bank: &[TrajectoryRow], baseline: &[TrajectoryRow]) -> Result<()> {
    if truth.len() != bank.len() || truth.len() != baseline.len() {
        return Err(CliError::Config("plot series have different lengths".into()));
    }
    let header: Vec<String> = [
        "t",
        "speed_truth",
        "speed_bank",
        "speed_baseline",
        "height_truth",
        "height_bank",
        "height_baseline",
        "mode_truth",
        "mode_bank",
        "mode_baseline",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_rows(
        path,
        &header,
        truth.iter().zip(bank).zip(baseline).map(|((t, b), z)| {
            let mut out: Vec<String> = [
                t.t,
                t.velocity.norm(),
                b.velocity.norm(),
                z.velocity.norm(),
                t.position.z,
                b.position.z,
                z.position.z,
            ]
            .iter()
            .map(f64::to_string)
            .collect();
            out.extend([t.mode.get(), b.map_mode.get(), z.map_mode.get()].iter().map(usize::to_string));
            out
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub filter_bank: ErrorMetrics,
    pub baseline: ErrorMetrics,
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| CliError::Config(format!("cannot serialize {}: {e}", path.display())))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::parse(path, format!("cannot open: {e}")))?;
    toml::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))
}

pub fn write_metrics(path: &Path, metrics: &MetricsFile) -> Result<()> {
    write_toml(path, metrics)
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    read_toml(path)
}

/// Learning report as written by `modebank learn`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    /// Rows of the learned transition matrix, `pi[next][current]`.
    pub pi: Vec<Vec<f64>>,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Percentage of samples with each most probable mode.
    pub occupancy: Vec<f64>,
    pub evaluations: usize,
}

impl From<&LearnReport> for ReportFile {
    fn from(r: &LearnReport) -> Self {
        ReportFile {
            pi: r.transition.rows(),
            loglik_trace: r.loglik_trace.clone(),
            iterations: r.iterations,
            converged: r.converged,
            occupancy: r.occupancy.clone(),
            evaluations: r.evaluations,
        }
    }
}

pub fn write_report(path: &Path, report: &ReportFile) -> Result<()> {
    write_toml(path, report)
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    read_toml(path)
}

#[derive(Deserialize)]
struct TransitionDoc {
    pi: Vec<Vec<f64>>,
}

/// The `pi` key of a TOML document; other keys are ignored so that learning
/// reports can be used directly.
pub fn read_transition_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read transition file {}: {e}", path.display())))?;
    let doc: TransitionDoc =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("transition file {}: {e}", path.display())))?;
    Ok(doc.pi)
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn temp_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn imu_round_trip(values in prop::collection::vec(-1e3..1e3f64, 6..60)) {
            let samples: Vec<ImuSample> = values
                .chunks_exact(6)
                .enumerate()
                .map(|(k, v)| ImuSample::new(0.01 * k as f64 + 1e-3, Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5])))
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("imu.csv");
            write_imu(&path, &samples).unwrap();
            let back = read_imu(&path).unwrap();
            prop_assert_eq!(back.len(), samples.len());
            for (a, b) in back.iter().zip(&samples) {
                prop_assert!((a.t - b.t).abs() <= 1e-12);
                prop_assert!((a.specific_force - b.specific_force).amax() <= 1e-12);
                prop_assert!((a.angular_rate - b.angular_rate).amax() <= 1e-12);
            }
        }

        #[test]
        fn trajectory_round_trip(values in prop::collection::vec(-1e3..1e3f64, 13..130), modes in 1usize..4) {
            let rows: Vec<TrajectoryRow> = values
                .chunks_exact(13)
                .enumerate()
                .map(|(k, v)| TrajectoryRow {
                    t: k as f64 * 0.01,
                    position: Vec3::new(v[0], v[1], v[2]),
                    velocity: Vec3::new(v[3], v[4], v[5]),
                    euler: EulerAngles::new(v[6], v[7], v[8]),
                    map_mode: ModeIndex::new(1 + k % modes),
                    mode_posterior: v[9..9 + modes].to_vec(),
                    loglik_increment: v[12],
                })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("traj.csv");
            write_trajectory(&path, &rows).unwrap();
            prop_assert_eq!(read_trajectory(&path).unwrap(), rows);
        }
    }

    #[test]
    fn truth_round_trip() {
        let rows = vec![
            TruthRow {
                t: 0.0,
                position: Vec3::new(1.0 / 3.0, -2.5, 1e-17),
                velocity: Vec3::new(0.1, 0.2, 0.3),
                euler: EulerAngles::new(6.0, -1.2, 0.1),
                mode: ModeIndex::new(3),
            },
            TruthRow {
                t: 0.01,
                position: Vec3::zeros(),
                velocity: Vec3::zeros(),
                euler: EulerAngles::new(0.0, 0.0, 0.0),
                mode: ModeIndex::new(1),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        write_truth(&path, &rows).unwrap();
        assert_eq!(read_truth(&path).unwrap(), rows);
    }

    #[test]
    fn wrong_header_is_a_parse_error() {
        let f = temp_file("t,ax,ay,az,wx,wy,wz\n0,0,0,9.81,0,0,0\n");
        let err = read_imu(f.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn bad_values_report_the_line() {
        let f = temp_file("t,sx,sy,sz,wx,wy,wz\n0,0,0,9.81,0,0,0\n0.01,0,zero,9.81,0,0,0\n");
        let err = read_imu(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let f = temp_file("t,sx,sy,sz,wx,wy,wz\n0,0,0,9.81,0,0,0\n0.01,0,NaN,9.81,0,0,0\n");
        assert!(read_imu(f.path()).is_err());
        let f = temp_file("t,sx,sy,sz,wx,wy,wz\n0,0,0,9.81,0,0,0\n0,0,0,9.81,0,0,0\n");
        assert!(read_imu(f.path()).unwrap_err().to_string().contains("time step"));
        let f = temp_file("t,sx,sy,sz,wx,wy,wz\n0,0,0,9.81,0,0\n");
        assert_eq!(read_imu(f.path()).unwrap_err().exit_code(), 3);
        let f = temp_file("t,sx,sy,sz,wx,wy,wz\n");
        assert_eq!(read_imu(f.path()).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn missing_file_is_a_parse_error() {
        assert_eq!(read_imu(Path::new("/nonexistent/imu.csv")).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn report_doubles_as_transition_file() {
        let report = ReportFile {
            pi: vec![vec![0.9, 0.2], vec![0.1, 0.8]],
            loglik_trace: vec![-10.0, -5.5],
            iterations: 1,
            converged: true,
            occupancy: vec![60.0, 40.0],
            evaluations: 9,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.toml");
        write_report(&path, &report).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
        assert_eq!(read_transition_file(&path).unwrap(), report.pi);
    }
}
