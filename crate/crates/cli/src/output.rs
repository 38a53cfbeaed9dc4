//! Files written by the commands. Every float goes out with 9 significant
//! digits so that bundles compare byte for byte.
//!
//! `runs.csv` columns, by mode:
//!
//! - macro and micro: `run,step,mover_id,ideal_x,ideal_y,actual_x,actual_y,e_lat,e_lon`
//! - dead reckoning: `run,t,true_x,true_y,est_x,est_y,err`
//!
//! `trajectories.csv` (micro, first run only): `run,step,t,x,y,heading,phase`
//!
//! `cdf.csv`: `maneuver,mover_id,e_lat,e_lon,error`

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use trisim::control::ControllerPhase;
use trisim::scenario::Mode;
use trisim::sim::{Aggregate, ComparisonCell, MonteCarlo, StepRecord};

pub const STEP_HEADER: &str = "run,step,mover_id,ideal_x,ideal_y,actual_x,actual_y,e_lat,e_lon";
pub const TICK_HEADER: &str = "run,t,true_x,true_y,est_x,est_y,err";
pub const TRAJECTORY_HEADER: &str = "run,step,t,x,y,heading,phase";
pub const CDF_HEADER: &str = "maneuver,mover_id,e_lat,e_lon,error";

const SIGNIFICANT: i32 = 9;

/// `x` with 9 significant digits, trailing zeros dropped. Very large or
/// small magnitudes use exponent notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{:.*e}", (SIGNIFICANT - 1) as usize, x);
    }
    let decimals = (SIGNIFICANT - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

fn round_sig(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with floats cut to 9 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report serializes");
    let mut s = serde_json::to_string_pretty(&round_value(v)).expect("json value serializes");
    s.push('\n');
    s
}

fn row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

pub fn runs_csv(mc: &MonteCarlo, mode: Mode) -> String {
    let mut out = String::new();
    match mode {
        Mode::Macro | Mode::Micro => {
            row(&mut out, &[STEP_HEADER.to_string()]);
            for r in &mc.records {
                for s in &r.steps {
                    row(
                        &mut out,
                        &[
                            r.run_index.to_string(),
                            s.step.to_string(),
                            s.mover_id.to_string(),
                            fmt_sig(s.ideal.x),
                            fmt_sig(s.ideal.y),
                            fmt_sig(s.actual.x),
                            fmt_sig(s.actual.y),
                            fmt_sig(s.e_lat),
                            fmt_sig(s.e_lon),
                        ],
                    );
                }
            }
        }
        Mode::DeadReckoning => {
            row(&mut out, &[TICK_HEADER.to_string()]);
            for r in &mc.records {
                for t in &r.ticks {
                    row(
                        &mut out,
                        &[
                            r.run_index.to_string(),
                            fmt_sig(t.t),
                            fmt_sig(t.true_pos.x),
                            fmt_sig(t.true_pos.y),
                            fmt_sig(t.est_pos.x),
                            fmt_sig(t.est_pos.y),
                            fmt_sig(t.error),
                        ],
                    );
                }
            }
        }
    }
    out
}

fn phase_name(p: ControllerPhase) -> &'static str {
    match p {
        ControllerPhase::Approaching => "approaching",
        ControllerPhase::InnerTriangle => "inner_triangle",
        ControllerPhase::BuildingTriangle => "building_triangle",
        ControllerPhase::Settled => "settled",
    }
}

pub fn trajectories_csv(mc: &MonteCarlo) -> String {
    let mut out = String::new();
    row(&mut out, &[TRAJECTORY_HEADER.to_string()]);
    for r in &mc.records {
        for m in &r.maneuvers {
            for s in &m.samples {
                row(
                    &mut out,
                    &[
                        r.run_index.to_string(),
                        m.step.to_string(),
                        fmt_sig(s.t),
                        fmt_sig(s.pose.x),
                        fmt_sig(s.pose.y),
                        fmt_sig(s.pose.heading),
                        phase_name(s.phase).to_string(),
                    ],
                );
            }
        }
    }
    out
}

pub fn cdf_csv(samples: &[StepRecord]) -> String {
    let mut out = String::new();
    row(&mut out, &[CDF_HEADER.to_string()]);
    for (i, s) in samples.iter().enumerate() {
        row(
            &mut out,
            &[
                i.to_string(),
                s.mover_id.to_string(),
                fmt_sig(s.e_lat),
                fmt_sig(s.e_lon),
                fmt_sig(s.e_lat.hypot(s.e_lon)),
            ],
        );
    }
    out
}

pub fn summary_text(a: &Aggregate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario         {}", a.scenario);
    let _ = writeln!(s, "mode             {}", a.mode.name());
    let _ = writeln!(s, "runs             {}", a.runs);
    let _ = writeln!(s, "master seed      {}", a.master_seed);
    let _ = writeln!(s, "wheel rate       {} rad/s", fmt_sig(a.omega_wheel));
    let _ = writeln!(s, "robots           {}", a.robots);
    let _ = writeln!(
        s,
        "final error      {} m (std {} m)",
        fmt_sig(a.mean_final_error_m),
        fmt_sig(a.std_final_error_m)
    );
    let _ = writeln!(s, "triangles        {}", fmt_sig(a.mean_triangle_count));
    let _ = writeln!(s, "travel time      {} s", fmt_sig(a.mean_travel_time_s));
    if let Some(st) = &a.steps {
        let _ = writeln!(
            s,
            "|e_lat| per step {} m (std {} m)",
            fmt_sig(st.mean_abs_e_lat_m),
            fmt_sig(st.std_abs_e_lat_m)
        );
        let _ = writeln!(
            s,
            "|e_lon| per step {} m (std {} m)",
            fmt_sig(st.mean_abs_e_lon_m),
            fmt_sig(st.std_abs_e_lon_m)
        );
    }
    s
}

/// Method comparison laid out like a results table: one row per
/// trajectory, a proposed and a dead-reckoning column per wheel rate, and
/// the dead-reckoning error of each further rate relative to the first.
pub fn comparison_table(rows: &[(String, Vec<ComparisonCell>)]) -> String {
    let mut s = String::new();
    let Some((_, first)) = rows.first() else {
        return s;
    };
    let mut header = format!("{:<12}", "trajectory");
    for c in first {
        let _ = write!(header, " {:>14} {:>14}", format!("prop@{}", fmt_sig(c.omega_wheel)), format!("dr@{}", fmt_sig(c.omega_wheel)));
    }
    for c in first.iter().skip(1) {
        let _ = write!(header, " {:>14}", format!("dr_ratio@{}", fmt_sig(c.omega_wheel)));
    }
    let _ = writeln!(s, "{}", header.trim_end());
    for (name, cells) in rows {
        let mut line = format!("{name:<12}");
        for c in cells {
            let _ = write!(
                line,
                " {:>14} {:>14}",
                fmt_sig(c.proposed.mean_final_error_m),
                fmt_sig(c.dead_reckoning.mean_final_error_m)
            );
        }
        for c in cells.iter().skip(1) {
            let ratio = c.dead_reckoning.mean_final_error_m / cells[0].dead_reckoning.mean_final_error_m;
            let _ = write!(line, " {:>14}", fmt_sig(ratio));
        }
        let _ = writeln!(s, "{}", line.trim_end());
    }
    s
}

pub fn sweep_table(sweep: &[Aggregate]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>8} {:>16} {:>12}", "robots", "final_error_m", "triangles");
    for a in sweep {
        let _ = writeln!(
            s,
            "{:>8} {:>16} {:>12}",
            a.robots,
            fmt_sig(a.mean_final_error_m),
            fmt_sig(a.mean_triangle_count)
        );
    }
    let errs: Vec<f64> = sweep.iter().map(|a| a.mean_final_error_m).collect();
    let max = errs.iter().copied().fold(f64::MIN, f64::max);
    let min = errs.iter().copied().fold(f64::MAX, f64::min);
    if !errs.is_empty() && min > 0.0 {
        let _ = writeln!(s, "max/min ratio {}", fmt_sig(max / min));
    }
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.1), "0.1");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(2.0 / 3.0 * 100.0), "66.6666667");
        assert_eq!(fmt_sig(123456789.4), "123456789");
        assert_eq!(fmt_sig(-0.0012345678912), "-0.00123456789");
        assert_eq!(fmt_sig(1.299038105676658), "1.29903811");
        assert_eq!(fmt_sig(1e-9), "1.00000000e-9");
    }

    #[test]
    fn json_floats_are_rounded() {
        let s = to_json(&serde_json::json!({ "a": 1.0 / 3.0, "n": 7, "v": [0.1, 2.0 / 3.0] }));
        assert!(s.contains("0.333333333"));
        assert!(!s.contains("0.3333333333"));
        assert!(s.contains("0.666666667"));
        assert!(s.contains("\"n\": 7"));
    }
}
