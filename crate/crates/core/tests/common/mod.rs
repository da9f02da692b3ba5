//! Shared fixtures for the integration and acceptance suites.
// Each test binary uses a different subset of these helpers.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CITIES: [&str; 6] = ["bj", "cq", "gz", "sh", "sz", "wh"];

/// Deterministic message log: 24 users hopping between the fixture cities.
pub fn write_message_log(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut out = String::from("message_id,user_id,timestamp,city_id\n");
    let mut message_id = 0usize;
    for user in 0..24 {
        let n_posts = rng.gen_range(3..=6);
        let mut t = rng.gen_range(100..500);
        for _ in 0..n_posts {
            let city = CITIES[rng.gen_range(0..CITIES.len())];
            writeln!(out, "m{message_id:04},u{user:02},{t},{city}").unwrap();
            message_id += 1;
            t += rng.gen_range(10..100);
        }
    }
    fs::write(path, out).unwrap();
}

pub fn write_registry(path: &Path) {
    let mut out = String::from("raw,city_id\n");
    for city in CITIES {
        writeln!(out, "{city},{city}").unwrap();
    }
    fs::write(path, out).unwrap();
}

pub fn write_city_attrs(path: &Path) {
    let mut out = String::from(
        "city_id,name,longitude,latitude,gdp,gdp_per_capita,population,province_id\n",
    );
    // Distinct coordinates and masses so no feature coordinate degenerates.
    let rows = [
        ("bj", 116.4, 39.9, 28000.0, 12.8, 2188.0, "p1"),
        ("cq", 106.5, 29.5, 19500.0, 6.1, 3200.0, "p2"),
        ("gz", 113.3, 23.1, 25000.0, 13.4, 1868.0, "p3"),
        ("sh", 121.5, 31.2, 30900.0, 12.4, 2489.0, "p4"),
        ("sz", 114.1, 22.5, 27700.0, 15.7, 1766.0, "p3"),
        ("wh", 114.3, 30.6, 15600.0, 11.3, 1365.0, "p5"),
    ];
    for (id, lon, lat, gdp, gpc, pop, prov) in rows {
        writeln!(out, "{id},{id},{lon},{lat},{gdp},{gpc},{pop},{prov}").unwrap();
    }
    fs::write(path, out).unwrap();
}

/// Positive symmetric costs over every fixture city pair.
pub fn write_cost_table(path: &Path, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(7 + scale as u64);
    let mut out = String::from("city_a,city_b,cost\n");
    for (i, a) in CITIES.iter().enumerate() {
        for b in CITIES.iter().skip(i + 1) {
            let cost = scale * rng.gen_range(1.0..20.0);
            writeln!(out, "{a},{b},{cost}").unwrap();
        }
    }
    fs::write(path, out).unwrap();
}

pub fn run_cli(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_cityflux"))
        .args(args)
        .output()
        .expect("cityflux binary runs")
}

/// Output bytes with the `#` metadata header stripped.
pub fn csv_body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Root of the optional published dataset; tests skip cleanly when absent.
pub fn data_dir() -> Option<PathBuf> {
    let dir = match std::env::var_os("CITYFLUX_DATA") {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    };
    dir.is_dir().then_some(dir)
}
