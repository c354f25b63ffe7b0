//! Grid, load-case and configuration files.
//!
//! Grids and load cases are JSON documents; run and benchmark
//! configurations are TOML. Relative paths inside a configuration are
//! resolved against the directory of the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::EvalOptions;
use crate::grid::{validate_grid, Branch, Bus, Grid, Injection, LoadCase, Switch, Violation};
use crate::heuristics::{Algo, AlgoParams, Budget, RunOptions};
use crate::measures::CatalogConfig;

pub const GRID_FORMAT: &str = "gridplan-grid";
pub const LOAD_CASES_FORMAT: &str = "gridplan-load-cases";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {error}")]
    Read { path: PathBuf, error: std::io::Error },
    #[error("{path}: {error}")]
    Write { path: PathBuf, error: std::io::Error },
    #[error("{path}: parse error at line {line}, column {column} (byte {offset}): {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },
    #[error("{path}: {}", join_violations(.violations))]
    Invalid { path: PathBuf, violations: Vec<Violation> },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Byte offset of a 1-based line/column position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn json_error(path: &Path, text: &str, e: serde_json::Error) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    }
}

fn toml_error(path: &Path, text: &str, e: toml::de::Error) -> IoError {
    let offset = e.span().map_or(0, |s| s.start);
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = offset - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        offset,
        message: e.message().to_string(),
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|error| IoError::Read {
        path: path.to_path_buf(),
        error,
    })
}

pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let err = |error| IoError::Write {
        path: path.to_path_buf(),
        error,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(err)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub format: String,
    pub version: u32,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub switches: Vec<Switch>,
    pub injections: Vec<Injection>,
}

impl GridFile {
    pub fn from_grid(grid: &Grid) -> Self {
        Self {
            format: GRID_FORMAT.into(),
            version: FORMAT_VERSION,
            base_mva: grid.base_mva(),
            buses: grid.buses().to_vec(),
            branches: grid.branches().to_vec(),
            switches: grid.switches().to_vec(),
            injections: grid.injections().to_vec(),
        }
    }
}

fn check_header(path: &Path, format: &str, expected: &str, version: u32) -> Result<(), IoError> {
    if format != expected {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: format!("format is '{format}', expected '{expected}'"),
        });
    }
    if version != FORMAT_VERSION {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        });
    }
    Ok(())
}

/// Parses and validates a grid document. `path` only labels errors.
pub fn parse_grid(text: &str, path: &Path) -> Result<Grid, IoError> {
    let file: GridFile = serde_json::from_str(text).map_err(|e| json_error(path, text, e))?;
    check_header(path, &file.format, GRID_FORMAT, file.version)?;
    let grid = Grid::new(file.base_mva, file.buses, file.branches, file.switches, file.injections);
    let violations = validate_grid(&grid);
    if !violations.is_empty() {
        return Err(IoError::Invalid {
            path: path.to_path_buf(),
            violations,
        });
    }
    Ok(grid)
}

/// Parses a grid document without running validation.
pub fn parse_grid_unchecked(text: &str, path: &Path) -> Result<Grid, IoError> {
    let file: GridFile = serde_json::from_str(text).map_err(|e| json_error(path, text, e))?;
    check_header(path, &file.format, GRID_FORMAT, file.version)?;
    Ok(Grid::new(file.base_mva, file.buses, file.branches, file.switches, file.injections))
}

pub fn load_grid(path: &Path) -> Result<Grid, IoError> {
    parse_grid(&read(path)?, path)
}

pub fn grid_to_string(grid: &Grid) -> String {
    let mut s = serde_json::to_string_pretty(&GridFile::from_grid(grid)).expect("grid serializes");
    s.push('\n');
    s
}

pub fn save_grid(grid: &Grid, path: &Path) -> Result<(), IoError> {
    write_atomic(path, grid_to_string(grid).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadCasesFile {
    pub format: String,
    pub version: u32,
    pub load_cases: Vec<LoadCase>,
}

pub fn parse_load_cases(text: &str, path: &Path) -> Result<Vec<LoadCase>, IoError> {
    let file: LoadCasesFile = serde_json::from_str(text).map_err(|e| json_error(path, text, e))?;
    check_header(path, &file.format, LOAD_CASES_FORMAT, file.version)?;
    Ok(file.load_cases)
}

pub fn load_load_cases(path: &Path) -> Result<Vec<LoadCase>, IoError> {
    parse_load_cases(&read(path)?, path)
}

pub fn load_cases_to_string(cases: &[LoadCase]) -> String {
    let file = LoadCasesFile {
        format: LOAD_CASES_FORMAT.into(),
        version: FORMAT_VERSION,
        load_cases: cases.to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("load cases serialize");
    s.push('\n');
    s
}

/// Settings shared by single runs and benchmarks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub catalog: CatalogConfig,
    pub eval: EvalOptions,
    pub budget: Budget,
    pub run: RunOptions,
    pub params: AlgoParams,
}

impl RunConfig {
    /// Defaults used by the command line: 5000 evaluations.
    pub fn with_default_budget() -> Self {
        Self {
            budget: Budget::evals(5000),
            ..Self::default()
        }
    }
}

pub fn parse_run_config(text: &str, path: &Path) -> Result<RunConfig, IoError> {
    toml::from_str(text).map_err(|e| toml_error(path, text, e))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, IoError> {
    parse_run_config(&read(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub grid: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_cases: Option<PathBuf>,
    /// Overrides the benchmark-wide catalog settings for this grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<CatalogConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub problems: Vec<ProblemSpec>,
    pub algorithms: Vec<Algo>,
    pub runs_per_cell: u32,
    pub seed_base: u64,
    pub out_dir: PathBuf,
    pub checkpoints_s: Vec<f64>,
    pub catalog: CatalogConfig,
    pub eval: EvalOptions,
    pub budget: Budget,
    pub run: RunOptions,
    pub params: AlgoParams,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            problems: Vec::new(),
            algorithms: Algo::ALL.to_vec(),
            runs_per_cell: 50,
            seed_base: 1,
            out_dir: PathBuf::from("results"),
            checkpoints_s: vec![300.0, 1800.0, 3600.0],
            catalog: CatalogConfig::default(),
            eval: EvalOptions::default(),
            budget: Budget::evals(5000),
            run: RunOptions::default(),
            params: AlgoParams::default(),
        }
    }
}

impl BenchmarkConfig {
    /// Rewrites relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for prob in &mut self.problems {
            fix(&mut prob.grid);
            if let Some(lc) = prob.load_cases.as_mut() {
                fix(lc);
            }
        }
    }
}

pub fn parse_benchmark_config(text: &str, path: &Path) -> Result<BenchmarkConfig, IoError> {
    toml::from_str(text).map_err(|e| toml_error(path, text, e))
}

/// Loads a benchmark configuration and resolves its paths.
pub fn load_benchmark_config(path: &Path) -> Result<BenchmarkConfig, IoError> {
    let mut cfg = parse_benchmark_config(&read(path)?, path)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::three_bus;

    fn p() -> &'static Path {
        Path::new("mem.json")
    }

    #[test]
    fn grid_round_trip() {
        let g = three_bus();
        let text = grid_to_string(&g);
        let back = parse_grid(&text, p()).unwrap();
        assert_eq!(back, g);
        assert_eq!(grid_to_string(&back), text);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let text = grid_to_string(&three_bus());
        let cut = &text[..text.len() / 2];
        match parse_grid(cut, p()) {
            Err(IoError::Parse { offset, line, .. }) => {
                assert!(offset <= cut.len());
                assert!(line > 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_rejected_with_location() {
        let text = grid_to_string(&three_bus()).replacen("\"vn_kv\"", "\"vn_kV\"", 1);
        let err = parse_grid(&text, p()).unwrap_err();
        let IoError::Parse { message, offset, .. } = &err else {
            panic!("{err:?}")
        };
        assert!(message.contains("vn_kV"), "{message}");
        let at = text.find("vn_kV").unwrap();
        assert!(*offset >= at && *offset <= at + 20, "{offset} vs {at}");
    }

    #[test]
    fn invalid_voltage_band_names_bus() {
        let (base, mut buses, br, sw, inj) = three_bus().into_parts();
        buses[1].min_vm_pu = 1.2;
        let text = grid_to_string(&Grid::new(base, buses, br, sw, inj));
        let err = parse_grid(&text, p()).unwrap_err();
        assert!(matches!(err, IoError::Invalid { .. }));
        assert!(err.to_string().contains("bus 1"), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = grid_to_string(&three_bus()).replacen("\"version\": 1", "\"version\": 7", 1);
        assert!(matches!(parse_grid(&text, p()), Err(IoError::Format { .. })));
    }

    #[test]
    fn load_cases_round_trip() {
        let mut lc = LoadCase::named("peak");
        lc.outages.insert(crate::grid::BranchId(2));
        let text = load_cases_to_string(std::slice::from_ref(&lc));
        assert_eq!(parse_load_cases(&text, p()).unwrap(), vec![lc]);
    }

    #[test]
    fn configs_print_and_parse_back() {
        let run = RunConfig::with_default_budget();
        let text = toml::to_string(&run).unwrap();
        assert_eq!(parse_run_config(&text, p()).unwrap(), run);
        let bench = BenchmarkConfig::default();
        let text = toml::to_string(&bench).unwrap();
        assert_eq!(parse_benchmark_config(&text, p()).unwrap(), bench);
    }

    #[test]
    fn toml_errors_carry_position() {
        let text = "[budget]\neval_limit = 10\nbogus = 1\n";
        match parse_run_config(text, p()) {
            Err(IoError::Parse { line, offset, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(offset, text.find("bogus").unwrap());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg = BenchmarkConfig {
            problems: vec![ProblemSpec {
                name: "a".into(),
                grid: "a.json".into(),
                load_cases: Some("/abs/lc.json".into()),
                catalog: None,
            }],
            out_dir: "out".into(),
            ..BenchmarkConfig::default()
        };
        cfg.resolve_paths(Path::new("/etc/bench"));
        assert_eq!(cfg.problems[0].grid, Path::new("/etc/bench/a.json"));
        assert_eq!(cfg.problems[0].load_cases.as_deref(), Some(Path::new("/abs/lc.json")));
        assert_eq!(cfg.out_dir, Path::new("/etc/bench/out"));
    }
}
