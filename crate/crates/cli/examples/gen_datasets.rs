//! Writes deterministic stand-ins for the seven sensor datasets: the column
//! layout follows the public TON-IoT activity files and the AQ&U export,
//! the values are seeded random walks, and a few rows carry unparseable
//! cells so the loader's skip path is exercised.
//!
//! Usage: `cargo run -p yada-cli --example gen_datasets -- [out_dir]`

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2023;
/// Fraction of rows written beyond each source's sample quota.
const HEADROOM: f64 = 0.25;
const BAD_ROW_EVERY: usize = 250;

struct Walk {
    value: f64,
    lo: f64,
    hi: f64,
    step: f64,
    p_move: f64,
    decimals: i32,
}

impl Walk {
    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if rng.gen_bool(self.p_move) {
            self.value += rng.gen_range(-self.step..=self.step);
            self.value = self.value.clamp(self.lo, self.hi);
        }
        let f = 10f64.powi(self.decimals);
        (self.value * f).round() / f
    }
}

fn walk(value: f64, lo: f64, hi: f64, step: f64, p_move: f64, decimals: i32) -> Walk {
    Walk {
        value,
        lo,
        hi,
        step,
        p_move,
        decimals,
    }
}

fn fmt(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn clock(i: usize) -> (String, String) {
    let secs = 8 * 3600 + i * 7;
    let day = 25 + secs / 86_400;
    let s = secs % 86_400;
    (
        format!("{day:02}-Apr-19"),
        format!("{:02}:{:02}:{:02}", s / 3600, s / 60 % 60, s % 60),
    )
}

/// Header, the mapped column's index, and a row generator.
type RowFn = Box<dyn FnMut(&mut ChaCha8Rng, usize) -> Vec<String>>;

fn sources() -> Vec<(&'static str, usize, Vec<&'static str>, usize, RowFn)> {
    let mut fridge = walk(6.0, 1.0, 14.0, 0.4, 0.5, 2);
    let mut garage_flip = 0u8;
    let mut lat = walk(116.52, 116.0, 117.0, 0.003, 0.9, 6);
    let mut lon = walk(-35.11, -36.0, -34.0, 0.003, 0.9, 6);
    let mut fc1 = walk(32_000.0, 0.0, 65_535.0, 900.0, 0.4, 0);
    let mut fc2 = walk(32_000.0, 0.0, 65_535.0, 900.0, 0.4, 0);
    let mut motion = 0u8;
    let mut thermo = walk(24.0, 18.0, 32.0, 0.6, 0.5, 2);
    let mut pm = walk(12.0, 0.0, 80.0, 2.0, 0.7, 2);
    let mut temp = walk(20.0, -5.0, 38.0, 0.5, 0.5, 1);
    let mut hum = walk(40.0, 5.0, 95.0, 1.0, 0.5, 1);
    let mut o3 = walk(0.035, 0.0, 0.09, 0.004, 0.5, 3);

    vec![
        (
            "fridge.csv",
            1000,
            vec!["date", "time", "fridge_temperature", "temp_condition", "label", "type"],
            2,
            Box::new(move |rng, i| {
                let (d, t) = clock(i);
                let v = fridge.next(rng);
                let cond = if v > 8.0 { "high" } else { "low" };
                vec![d, t, fmt(v, 2), cond.into(), "0".into(), "normal".into()]
            }),
        ),
        (
            "garage_door.csv",
            800,
            vec!["date", "time", "door_state", "sphone_signal", "label", "type"],
            3,
            Box::new(move |rng, i| {
                let (d, t) = clock(i);
                if rng.gen_bool(0.15) {
                    garage_flip ^= 1;
                }
                let door = if garage_flip == 1 { "open" } else { "closed" };
                vec![d, t, door.into(), garage_flip.to_string(), "0".into(), "normal".into()]
            }),
        ),
        (
            "gps_tracker.csv",
            2200,
            vec!["date", "time", "latitude", "longitude", "label", "type"],
            2,
            Box::new(move |rng, i| {
                let (d, t) = clock(i);
                vec![d, t, fmt(lat.next(rng), 6), fmt(lon.next(rng), 6), "0".into(), "normal".into()]
            }),
        ),
        (
            "modbus.csv",
            2000,
            vec![
                "date",
                "time",
                "FC1_Read_Input_Register",
                "FC2_Read_Discrete_Value",
                "FC3_Read_Holding_Register",
                "FC4_Read_Coil",
                "label",
            ],
            2,
            Box::new(move |rng, i| {
                let (d, t) = clock(i);
                vec![
                    d,
                    t,
                    fmt(fc1.next(rng), 0),
                    fmt(fc2.next(rng), 0),
                    rng.gen_range(0..65_536).to_string(),
                    rng.gen_range(0..65_536).to_string(),
                    "0".into(),
                ]
            }),
        ),
        (
            "motion_light.csv",
            1000,
            vec!["date", "time", "motion_status", "light_status", "label", "type"],
            2,
            Box::new(move |rng, i| {
                let (d, t) = clock(i);
                if rng.gen_bool(0.2) {
                    motion ^= 1;
                }
                let light = if motion == 1 { "on" } else { "off" };
                vec![d, t, motion.to_string(), light.into(), "0".into(), "normal".into()]
            }),
        ),
        (
            "thermostat.csv",
            1000,
            vec!["date", "time", "current_temperature", "thermostat_status", "label", "type"],
            2,
            Box::new(move |rng, i| {
                let (d, t) = clock(i);
                let v = thermo.next(rng);
                let status = u8::from(v < 22.0);
                vec![d, t, fmt(v, 2), status.to_string(), "0".into(), "normal".into()]
            }),
        ),
        (
            "aqu.csv",
            2000,
            vec![
                "time",
                "sensor_id",
                "latitude",
                "longitude",
                "altitude",
                "pm1",
                "pm2_5",
                "pm10",
                "temperature",
                "humidity",
                "o3",
            ],
            10,
            Box::new(move |rng, i| {
                let (d, t) = clock(i);
                let p = pm.next(rng);
                vec![
                    format!("{d} {t}"),
                    format!("S-A-{:03}", rng.gen_range(0..40)),
                    fmt(40.76 + rng.gen_range(-0.05..0.05), 5),
                    fmt(-111.89 + rng.gen_range(-0.05..0.05), 5),
                    fmt(1300.0 + rng.gen_range(0.0..200.0), 1),
                    fmt(p * 0.7, 2),
                    fmt(p, 2),
                    fmt(p * 1.3, 2),
                    fmt(temp.next(rng), 1),
                    fmt(hum.next(rng), 1),
                    fmt(o3.next(rng), 3),
                ]
            }),
        ),
    ]
}

fn main() -> std::io::Result<()> {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures/datasets"));
    fs::create_dir_all(&dir)?;
    for (k, (file, used, header, mapped, mut row)) in sources().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + k as u64);
        let rows = used + (used as f64 * HEADROOM) as usize;
        let path = dir.join(file);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{}", header.join(","))?;
        for i in 0..rows {
            let mut cells = row(&mut rng, i);
            if i % BAD_ROW_EVERY == BAD_ROW_EVERY - 1 {
                cells[mapped] = ["-", "nan", "err"][i / BAD_ROW_EVERY % 3].to_string();
            }
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        println!("{} rows -> {}", rows, path.display());
    }
    Ok(())
}
