#![allow(dead_code)]

use std::path::PathBuf;

use gridplan::evaluation::EvalOptions;
use gridplan::heuristics::Problem;
use gridplan::io;
use gridplan::measures::{build_catalog, CatalogConfig};

pub fn fixture_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(file)
}

/// `desk14` or `desk120` with its load cases and the default catalog.
pub fn fixture(name: &str) -> Problem {
    let grid = io::load_grid(&fixture_path(&format!("{name}.grid.json"))).unwrap();
    let cases = io::load_load_cases(&fixture_path(&format!("{name}.cases.json"))).unwrap();
    let catalog = build_catalog(&grid, &CatalogConfig::default()).unwrap();
    Problem::new(grid, cases, catalog, EvalOptions::default())
}
