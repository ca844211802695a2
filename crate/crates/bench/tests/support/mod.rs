#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use railopt_bench::plan::VariantSpec;
use railopt_bench::ExperimentPlan;
use railopt_core::format::write_instance;
use railopt_core::instance_gen::{generate, GeneratorParams};
use railopt_core::Time;

/// Generate an instance and write it to `dir/<name>.rail`.
pub fn write_generated(dir: &Path, name: &str, params: &GeneratorParams) -> PathBuf {
    let g = generate::<Time>(params).expect("generator succeeds");
    let path = dir.join(format!("{name}.rail"));
    fs::write(&path, write_instance(&g.instance)).unwrap();
    path
}

pub fn small(n_trains: usize, seed: u64) -> GeneratorParams {
    GeneratorParams { n_trains, n_nodes: 6, density: 1.0, delay: (600, 1200), violation_rate: 0.2, seed, ..GeneratorParams::default() }
}

pub fn plan(instances: Vec<PathBuf>, variants: &[&str], runs: usize, generations: u32) -> ExperimentPlan {
    ExperimentPlan {
        instances,
        variants: variants.iter().map(|v| VariantSpec::named(v)).collect(),
        runs,
        generations,
        inoculation: railopt_bench::plan::InoculationSettings { generations: 10, seed: 0 },
        ..ExperimentPlan::default()
    }
}

/// Every file below `root`, keyed by its path relative to `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_owned(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn count_named(files: &BTreeMap<PathBuf, Vec<u8>>, name: &str) -> usize {
    files.keys().filter(|p| p.file_name().is_some_and(|f| f == name)).count()
}
