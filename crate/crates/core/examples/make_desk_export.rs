//! Writes the bundled desk-scale export in the Safecast column layout.
//!
//! Normal µSv/h traffic comes from sixteen mobile devices, each with its own
//! home area and baseline dose rate. Three sensor faults are mixed in: one
//! device stuck at exactly zero, one session reporting a fraction of its
//! local background, and two isolated spikes of 44 and 66. A few hundred
//! cpm rows and a handful of broken rows exercise ingestion.
//!
//! Usage: `cargo run --example make_desk_export -- [out.csv] [seed]`

use std::error::Error;

use radsentry::ingest::{format_unix_timestamp, to_unix_timestamp};
use radsentry::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};

const HEADER: [&str; 13] = [
    "Captured Time",
    "Latitude",
    "Longitude",
    "Value",
    "Unit",
    "Location Name",
    "Device ID",
    "MD5Sum",
    "Height",
    "Surface",
    "Radiation",
    "Uploaded Time",
    "Loader ID",
];

struct Device {
    id: &'static str,
    lat: f64,
    lon: f64,
    baseline: f64,
}

// Home areas span the evacuation-zone hotspots down to low-background
// coastal cities, and several devices share a region.
const DEVICES: [Device; 16] = [
    Device { id: "100", lat: 37.42, lon: 140.47, baseline: 0.25 },
    Device { id: "102", lat: 37.75, lon: 140.47, baseline: 0.16 },
    Device { id: "103", lat: 37.49, lon: 140.99, baseline: 1.80 },
    Device { id: "104", lat: 36.38, lon: 140.10, baseline: 0.11 },
    Device { id: "105", lat: 37.60, lon: 140.75, baseline: 0.90 },
    Device { id: "106", lat: 35.68, lon: 139.69, baseline: 0.08 },
    Device { id: "107", lat: 38.27, lon: 140.87, baseline: 0.06 },
    Device { id: "108", lat: 35.70, lon: 139.80, baseline: 0.07 },
    Device { id: "110", lat: 36.65, lon: 138.19, baseline: 0.07 },
    Device { id: "111", lat: 37.40, lon: 140.38, baseline: 0.35 },
    Device { id: "113", lat: 35.18, lon: 136.91, baseline: 0.05 },
    Device { id: "115", lat: 37.90, lon: 139.03, baseline: 0.09 },
    Device { id: "118", lat: 34.69, lon: 135.50, baseline: 0.05 },
    Device { id: "120", lat: 35.65, lon: 139.60, baseline: 0.06 },
    Device { id: "131", lat: 43.06, lon: 141.35, baseline: 0.03 },
    Device { id: "133", lat: 26.21, lon: 127.68, baseline: 0.035 },
];

const NORMAL_ROWS: usize = 10_000;
const STEP_S: f64 = 5.0;

struct Row {
    captured: f64,
    lat: f64,
    lon: f64,
    value: String,
    unit: &'static str,
    device: &'static str,
    uploaded: f64,
}

fn captured_text(t: f64) -> String {
    // whole seconds, like the export's capture column
    format_unix_timestamp(t.floor())[..19].to_string()
}

fn md5ish(r: &mut impl Rng) -> String {
    (0..32).map(|_| char::from_digit(r.random_range(0..16), 16).unwrap()).collect()
}

/// A drive: `n` readings every few seconds starting at `start`, wandering
/// around (`lat`, `lon`).
fn session(
    r: &mut rng::Rng,
    n: usize,
    start: f64,
    lat: f64,
    lon: f64,
    mut value: impl FnMut(&mut rng::Rng) -> f64,
    device: &'static str,
) -> Vec<Row> {
    let lag = r.random_range(1800.0..259_200.0);
    let (mut la, mut lo) = (lat + r.random_range(-0.05..0.05), lon + r.random_range(-0.05..0.05));
    (0..n)
        .map(|i| {
            la += r.random_range(-0.0004..0.0004);
            lo += r.random_range(-0.0004..0.0004);
            let captured = start + i as f64 * STEP_S;
            Row {
                captured,
                lat: la,
                lon: lo,
                value: format!("{:.4}", value(r)),
                unit: "usv",
                device,
                uploaded: captured + lag + r.random_range(0.0..1.0),
            }
        })
        .collect()
}

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "data/desk_export.csv".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20_230_101);
    let mut r = rng::seeded(seed);

    let t0 = to_unix_timestamp("2023-01-02 06:00:00")?;
    let span = to_unix_timestamp("2023-06-28 18:00:00")? - t0;
    let z = Normal::new(0.0, 0.2)?;
    let mut rows = Vec::new();

    let mut d = 0;
    while rows.len() < NORMAL_ROWS {
        let dev = &DEVICES[d % DEVICES.len()];
        d += 1;
        let n = r.random_range(80..160).min(NORMAL_ROWS - rows.len());
        let start = t0 + r.random_range(0.0..span);
        let base = dev.baseline;
        rows.extend(session(&mut r, n, start, dev.lat, dev.lon, |r| {
            let e: f64 = z.sample(r);
            base * e.clamp(-0.6, 0.6).exp()
        }, dev.id));
    }

    // a Tokyo unit stuck at zero for one drive
    let start = to_unix_timestamp("2023-03-14 21:10:00")?;
    rows.extend(session(&mut r, 120, start, 35.68, 139.69, |_| 0.0, "106"));

    // a Sapporo unit reading a fraction of the local background
    let start = to_unix_timestamp("2023-05-02 10:45:00")?;
    rows.extend(session(&mut r, 60, start, 43.06, 141.35, |r| r.random_range(0.004..0.009), "131"));

    // two isolated spikes inside ordinary sessions
    for (i, spike) in [(1_234usize, 44.0), (7_777, 66.0)] {
        rows[i].value = format!("{spike:.4}");
    }

    // cpm traffic from the same devices is filtered by unit
    for _ in 0..300 {
        let d = &DEVICES[r.random_range(0..DEVICES.len())];
        let captured = t0 + r.random_range(0.0..span);
        rows.push(Row {
            captured,
            lat: d.lat,
            lon: d.lon,
            value: format!("{}", r.random_range(20..60)),
            unit: "cpm",
            device: d.id,
            uploaded: captured + 7200.0,
        });
    }

    rows.sort_by(|a, b| a.captured.total_cmp(&b.captured));

    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(HEADER)?;
    let mut written = 0;
    for (i, row) in rows.iter().enumerate() {
        let record = [
            captured_text(row.captured),
            format!("{:.6}", row.lat),
            format!("{:.6}", row.lon),
            row.value.clone(),
            row.unit.to_string(),
            String::new(),
            row.device.to_string(),
            md5ish(&mut r),
            String::new(),
            String::new(),
            String::new(),
            format_unix_timestamp(row.uploaded),
            "1".to_string(),
        ];
        w.write_record(&record)?;
        written += 1;
        // sprinkle broken rows through the file
        if i % 1_000 == 500 {
            let broken: [String; 13] = match (i / 1_000) % 3 {
                0 => {
                    let mut b = record.clone();
                    b[1] = "north".into();
                    b
                }
                1 => {
                    let mut b = record.clone();
                    b[0] = "2023-13-45 99:00:00".into();
                    b
                }
                _ => {
                    let mut b = record.clone();
                    b[3] = String::new();
                    b
                }
            };
            w.write_record(&broken)?;
            written += 1;
        }
    }
    w.flush()?;
    eprintln!("wrote {written} rows to {out}");
    Ok(())
}
