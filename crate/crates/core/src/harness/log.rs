//! Canonical CSV trajectory logs and conversion from external exports.
//!
//! Canonical header:
//! `t,fx,fy,fz,wx,wy,wz[,gt_n,gt_e,gt_d,gt_vn,gt_ve,gt_vd,gt_roll,gt_pitch,gt_yaw]`,
//! SI units, one row per IMU epoch. Values are written with the shortest
//! representation that parses back to the same `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::synth::{TrajectoryLog, TruthSample};
use crate::nav::{ImuSample, Vec3};
use crate::{NavError, Result};

const IMU_COLUMNS: [&str; 7] = ["t", "fx", "fy", "fz", "wx", "wy", "wz"];
const TRUTH_COLUMNS: [&str; 9] = [
    "gt_n", "gt_e", "gt_d", "gt_vn", "gt_ve", "gt_vd", "gt_roll", "gt_pitch", "gt_yaw",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NavError + '_ {
    move |source| NavError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "log".to_owned())
}

pub fn write_log<W: Write>(log: &TrajectoryLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = IMU_COLUMNS.to_vec();
    if log.has_truth() {
        header.extend(TRUTH_COLUMNS);
    }
    w.write_record(&header)?;
    for (k, s) in log.imu.iter().enumerate() {
        let mut row = vec![s.t, s.f_b.x, s.f_b.y, s.f_b.z, s.w_b.x, s.w_b.y, s.w_b.z];
        if let Some(g) = log.truth.get(k) {
            row.extend(g.p_ned.iter());
            row.extend(g.v_ned.iter());
            row.extend(g.euler.iter());
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| NavError::Csv(e.into()))?;
    Ok(())
}

pub fn write_log_file(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_log(log, f)
}

fn parse_field(record: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>()
        .map_err(|_| NavError::InvalidLog(format!("row {row}, column '{name}': cannot parse '{raw}'")))
}

pub fn read_log<R: Read>(name: &str, input: R) -> Result<TrajectoryLog> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let with_truth = match header.len() {
        7 => false,
        16 => true,
        n => return Err(NavError::InvalidLog(format!("expected 7 or 16 columns, found {n}"))),
    };
    let expected: Vec<&str> = IMU_COLUMNS.iter().chain(TRUTH_COLUMNS.iter()).take(header.len()).copied().collect();
    if header != expected {
        return Err(NavError::InvalidLog(format!("unexpected header {header:?}")));
    }
    let mut imu = Vec::new();
    let mut truth = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: Vec<f64> = (0..header.len())
            .map(|i| parse_field(&rec, i, row + 1, &header[i]))
            .collect::<Result<_>>()?;
        imu.push(ImuSample::new(v[0], Vec3::new(v[1], v[2], v[3]), Vec3::new(v[4], v[5], v[6])));
        if with_truth {
            truth.push(TruthSample {
                t: v[0],
                p_ned: Vec3::new(v[7], v[8], v[9]),
                v_ned: Vec3::new(v[10], v[11], v[12]),
                euler: Vec3::new(v[13], v[14], v[15]),
            });
        }
    }
    TrajectoryLog::new(name, imu, truth)
}

pub fn read_log_file(path: &Path) -> Result<TrajectoryLog> {
    let f = File::open(path).map_err(io_err(path))?;
    read_log(&stem(path), f)
}

/// Accepted spellings for each canonical quantity in external CSV exports.
fn aliases(key: &str) -> &'static [&'static str] {
    match key {
        "t" => &["t", "time", "timestamp", "time_s", "sec"],
        "fx" => &["fx", "ax", "acc_x", "accel_x", "f_x"],
        "fy" => &["fy", "ay", "acc_y", "accel_y", "f_y"],
        "fz" => &["fz", "az", "acc_z", "accel_z", "f_z"],
        "wx" => &["wx", "gx", "gyro_x", "omega_x", "w_x"],
        "wy" => &["wy", "gy", "gyro_y", "omega_y", "w_y"],
        "wz" => &["wz", "gz", "gyro_z", "omega_z", "w_z"],
        "n" => &["gt_n", "pn", "pos_n", "north"],
        "e" => &["gt_e", "pe", "pos_e", "east"],
        "d" => &["gt_d", "pd", "pos_d", "down"],
        "h" => &["gt_h", "alt", "altitude", "height", "up"],
        "vn" => &["gt_vn", "vn", "vel_n", "v_north"],
        "ve" => &["gt_ve", "ve", "vel_e", "v_east"],
        "vd" => &["gt_vd", "vd", "vel_d", "v_down"],
        "vu" => &["vu", "vel_u", "v_up"],
        "roll" => &["gt_roll", "roll"],
        "pitch" => &["gt_pitch", "pitch"],
        "yaw" => &["gt_yaw", "yaw", "heading"],
        _ => &[],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConvertOptions {
    /// Attitude columns are in degrees.
    pub degrees: bool,
}

/// Central-difference velocity, one-sided at the ends.
pub fn differentiate(t: &[f64], p: &[Vec3]) -> Vec<Vec3> {
    let n = p.len();
    if n < 2 {
        return vec![Vec3::zeros(); n];
    }
    (0..n)
        .map(|k| {
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            (p[b] - p[a]) / (t[b] - t[a])
        })
        .collect()
}

/// Reads an external CSV whose header uses any of the known aliases.
///
/// IMU columns are required. Truth is taken when position and attitude are
/// both present; velocity is differentiated from position if absent. Height or
/// up-velocity columns are accepted in place of the down components.
pub fn convert<R: Read>(name: &str, input: R, opts: ConvertOptions) -> Result<TrajectoryLog> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for key in [
        "t", "fx", "fy", "fz", "wx", "wy", "wz", "n", "e", "d", "h", "vn", "ve", "vd", "vu", "roll", "pitch", "yaw",
    ] {
        if let Some(i) = header.iter().position(|h| aliases(key).contains(&h.as_str())) {
            index.insert(key, i);
        }
    }
    for key in IMU_COLUMNS {
        if !index.contains_key(key) {
            return Err(NavError::InvalidLog(format!("missing column for '{key}' (accepted: {:?})", aliases(key))));
        }
    }
    let has = |k: &str| index.contains_key(k);
    let has_pos = has("n") && has("e") && (has("d") || has("h"));
    let has_att = has("roll") && has("pitch") && has("yaw");
    let has_vel = has("vn") && has("ve") && (has("vd") || has("vu"));
    if has_pos != has_att {
        return Err(NavError::InvalidLog("truth needs both position and attitude columns".into()));
    }

    let mut imu = Vec::new();
    let mut times = Vec::new();
    let mut pos = Vec::new();
    let mut vel = Vec::new();
    let mut att = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |k: &str| parse_field(&rec, index[k], row + 1, &header[index[k]]);
        let t = get("t")?;
        imu.push(ImuSample::new(
            t,
            Vec3::new(get("fx")?, get("fy")?, get("fz")?),
            Vec3::new(get("wx")?, get("wy")?, get("wz")?),
        ));
        times.push(t);
        if has_pos {
            let d = if has("d") { get("d")? } else { -get("h")? };
            pos.push(Vec3::new(get("n")?, get("e")?, d));
            let scale = if opts.degrees { 1f64.to_radians() } else { 1.0 };
            att.push(Vec3::new(get("roll")?, get("pitch")?, get("yaw")?) * scale);
            if has_vel {
                let vd = if has("vd") { get("vd")? } else { -get("vu")? };
                vel.push(Vec3::new(get("vn")?, get("ve")?, vd));
            }
        }
    }
    if has_pos && !has_vel {
        vel = differentiate(&times, &pos);
    }
    let truth = (0..pos.len())
        .map(|k| TruthSample {
            t: times[k],
            p_ned: pos[k],
            v_ned: vel[k],
            euler: att[k],
        })
        .collect();
    TrajectoryLog::new(name, imu, truth)
}

pub fn convert_file(input: &Path, opts: ConvertOptions) -> Result<TrajectoryLog> {
    let f = File::open(input).map_err(io_err(input))?;
    convert(&stem(input), f, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{gen_synthetic, ImuErrorSpec, Profile, SynthSpec};

    #[test]
    fn canonical_round_trip_is_lossless() {
        let spec = SynthSpec::new(Profile::Hilly, 3.0, 50.0, ImuErrorSpec::mems(Vec3::repeat(0.05)), 2);
        let log = gen_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        write_log(&log, &mut buf).unwrap();
        let back = read_log("hilly", buf.as_slice()).unwrap();
        assert_eq!(back.imu, log.imu);
        assert_eq!(back.truth, log.truth);
        let mut again = Vec::new();
        write_log(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn imu_only_log() {
        let csv = "t,fx,fy,fz,wx,wy,wz\n0,0,0,-9.8,0,0,0\n0.01,0,0,-9.8,0,0,0\n";
        let log = read_log("x", csv.as_bytes()).unwrap();
        assert_eq!(log.imu.len(), 2);
        assert!(!log.has_truth());
    }

    #[test]
    fn malformed_logs_are_rejected() {
        assert!(read_log("x", "t,fx\n0,1\n".as_bytes()).is_err());
        let bad = "t,fx,fy,fz,wx,wy,wz\n0,0,0,-9.8,0,0,0\n0.01,0,abc,-9.8,0,0,0\n";
        assert!(matches!(read_log("x", bad.as_bytes()), Err(NavError::InvalidLog(_))));
        let backwards = "t,fx,fy,fz,wx,wy,wz\n1,0,0,-9.8,0,0,0\n0,0,0,-9.8,0,0,0\n";
        assert!(read_log("x", backwards.as_bytes()).is_err());
    }

    #[test]
    fn convert_uses_aliases_and_differentiates_velocity() {
        let csv = "Time,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z,north,east,alt,roll,pitch,heading\n\
                   0.0,0.1,0,-9.8,0,0,0.01,0,0,10,0,0,90\n\
                   0.1,0.1,0,-9.8,0,0,0.01,1,0,10,0,0,90\n\
                   0.2,0.1,0,-9.8,0,0,0.01,3,0,10,0,0,90\n";
        let log = convert("ext", csv.as_bytes(), ConvertOptions { degrees: true }).unwrap();
        assert_eq!(log.imu.len(), 3);
        assert_eq!(log.truth[0].p_ned.z, -10.0);
        assert!((log.truth[0].v_ned.x - 10.0).abs() < 1e-12);
        assert!((log.truth[1].v_ned.x - 15.0).abs() < 1e-12);
        assert!((log.truth[2].v_ned.x - 20.0).abs() < 1e-12);
        assert!((log.truth[0].euler.z - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn convert_requires_imu_columns() {
        assert!(convert("x", "time,acc_x\n0,1\n".as_bytes(), ConvertOptions::default()).is_err());
    }
}
