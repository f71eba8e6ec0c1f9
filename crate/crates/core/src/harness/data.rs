use std::path::{Path, PathBuf};

use super::config::{DataKind, DatasetSpec, MNIST_DIR_ENV, MNIST_FILES};
use crate::data::{gen_glyphs, gen_synthetic, load_idx, Dataset};
use crate::error::{Error, Result};
use crate::rng;

/// Client pool, test set and server shard of one run.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub pool: Dataset,
    pub test: Dataset,
    pub server: Option<Dataset>,
    /// The spec actually used (an MNIST request without files becomes `glyphs`).
    pub resolved: DatasetSpec,
}

fn mnist_dir(spec: &DatasetSpec) -> Option<PathBuf> {
    let dir = spec
        .dir
        .clone()
        .or_else(|| std::env::var_os(MNIST_DIR_ENV).map(PathBuf::from))?;
    MNIST_FILES.iter().all(|f| dir.join(f).is_file()).then_some(dir)
}

fn take(ds: &Dataset, from: usize, n: usize, key: &str) -> Result<Dataset> {
    if from + n > ds.len() {
        return Err(Error::config(
            format!("dataset.{key}"),
            format!("needs {} samples but the source has {}", from + n, ds.len()),
        ));
    }
    Ok(ds.subset(&(from..from + n).collect::<Vec<_>>()))
}

/// Split one generated block into pool, test and server shard.
fn split_generated(all: &Dataset, spec: &DatasetSpec) -> Result<(Dataset, Dataset, Dataset)> {
    Ok((
        take(all, 0, spec.train, "train")?,
        take(all, spec.train, spec.test, "test")?,
        take(all, spec.train + spec.test, spec.server_shard, "server_shard")?,
    ))
}

fn from_files(paths: [&Path; 4], classes: Option<usize>, spec: &DatasetSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let train = load_idx(paths[0], paths[1], classes)?;
    let test = load_idx(paths[2], paths[3], classes.or(Some(train.num_classes)))?;
    Ok((
        take(&train, 0, spec.train, "train")?,
        take(&test, 0, spec.test, "test")?,
        take(&train, spec.train, spec.server_shard, "server_shard")?,
    ))
}

pub fn load_data(spec: &DatasetSpec, seed: u64) -> Result<LoadedData> {
    let gen_seed = rng::derive_seed(seed, "dataset", &[]);
    let total = spec.train + spec.test + spec.server_shard;
    let mut resolved = spec.clone();
    let (pool, test, server) = match spec.kind {
        DataKind::Synthetic => {
            let all = gen_synthetic(
                spec.classes.unwrap_or(10),
                spec.dim.unwrap_or(16),
                total,
                spec.separation.unwrap_or(1.0),
                gen_seed,
            )
            .map_err(|e| Error::config("dataset", e.to_string()))?;
            split_generated(&all, spec)?
        }
        DataKind::Glyphs => split_generated(&gen_glyphs(total, gen_seed), spec)?,
        DataKind::Mnist => match mnist_dir(spec) {
            Some(dir) => {
                let paths = MNIST_FILES.map(|f| dir.join(f));
                resolved.kind = DataKind::Idx;
                resolved.dir = None;
                resolved.classes = Some(10);
                [resolved.train_images, resolved.train_labels, resolved.test_images, resolved.test_labels] =
                    paths.clone().map(Some);
                from_files([&paths[0], &paths[1], &paths[2], &paths[3]], Some(10), spec)?
            }
            None => {
                resolved.kind = DataKind::Glyphs;
                resolved.dir = None;
                split_generated(&gen_glyphs(total, gen_seed), spec)?
            }
        },
        DataKind::Idx => {
            let paths = spec
                .idx_paths()
                .ok_or_else(|| Error::config("dataset.train_images", "idx datasets need all four paths"))?;
            from_files(paths, spec.classes, spec)?
        }
    };
    Ok(LoadedData {
        pool,
        test,
        server: (spec.server_shard > 0).then_some(server),
        resolved,
    })
}
