mod common;

use common::{fixture, fixture_path};
use gridplan::grid::validate_grid;
use gridplan::io;
use gridplan::measures::Candidate;

#[test]
fn fixtures_round_trip_byte_for_byte() {
    for name in ["desk14", "desk120"] {
        let path = fixture_path(&format!("{name}.grid.json"));
        let grid = io::load_grid(&path).unwrap();
        assert!(validate_grid(&grid).is_empty(), "{name}");
        let text = io::grid_to_string(&grid);
        assert_eq!(io::parse_grid(&text, &path).unwrap(), grid);
        assert_eq!(text, std::fs::read_to_string(&path).unwrap(), "{name} is not in canonical form");

        let cpath = fixture_path(&format!("{name}.cases.json"));
        let cases = io::load_load_cases(&cpath).unwrap();
        let ctext = io::load_cases_to_string(&cases);
        assert_eq!(io::parse_load_cases(&ctext, &cpath).unwrap(), cases);
    }
}

#[test]
fn desk14_catalog_and_landscape() {
    let p = fixture("desk14");
    let counts = p.catalog.counts();
    assert_eq!((counts.repl, counts.switch, counts.al), (6, 6, 0));
    assert_eq!(p.n_cases(), 2);
    // The grid as built overloads lines; something has to be bought.
    let zero = p.evaluate(&Candidate::zeros(p.catalog.len())).unwrap();
    assert!(zero.level > 0, "{zero:?}");
    // The optimum reported by the exhaustive search.
    let best = Candidate::from_bits("111100001100".chars().map(|c| c == '1').collect());
    let r = p.evaluate(&best).unwrap();
    assert_eq!((r.level, r.investment), (0, 23_850_000.0), "{r:?}");
}

#[test]
fn desk120_is_large_and_operable_as_built() {
    let p = fixture("desk120");
    assert_eq!(p.grid.buses().len(), 121);
    assert_eq!(p.catalog.len(), 58);
    let zero = p.evaluate(&Candidate::zeros(p.catalog.len())).unwrap();
    assert!(zero.level <= 2, "as-built grid should solve: {zero:?}");
    assert_eq!(zero.power_flows, p.n_cases());
}

#[test]
fn corrupt_fixture_text_reports_position() {
    let path = fixture_path("desk14.grid.json");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.insert(text.find("\"buses\"").unwrap(), '@');
    let err = io::parse_grid(&text, &path).unwrap_err().to_string();
    assert!(err.contains("parse error at line"), "{err}");
}
