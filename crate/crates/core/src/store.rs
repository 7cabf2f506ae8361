//! Dataset directories: a `manifest.txt` plus one GSQ1 file per input and target.
//!
//! ```text
//! <dir>/manifest.txt
//! <dir>/<split>/<index>.input.gsq
//! <dir>/<split>/<index>.target.gsq
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{config_err, Error, Result};
use crate::grid::{Dataset, SamplePair, Split};
use crate::gsq::{read_gridseq, write_gridseq};
use crate::kv::{join_list, KeyValues};

pub const MANIFEST: &str = "manifest.txt";

pub fn sample_paths(dir: &Path, split: Split, index: usize) -> (PathBuf, PathBuf) {
    let base = dir.join(split.as_str());
    (
        base.join(format!("{index:06}.input.gsq")),
        base.join(format!("{index:06}.target.gsq")),
    )
}

pub fn write_dataset(dir: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut kv = KeyValues::new();
    if let Some(names) = d.variable_names() {
        kv.set("variables", join_list(names));
    }
    for split in Split::ALL {
        let mut count = 0;
        for (i, s) in d.split(split).enumerate() {
            if i == 0 {
                fs::create_dir_all(dir.join(split.as_str()))?;
            }
            let (pi, pt) = sample_paths(dir, split, i);
            write_gridseq(pi, &s.input)?;
            write_gridseq(pt, &s.target)?;
            count += 1;
        }
        kv.set(format!("count.{}", split.as_str()), count);
    }
    fs::write(dir.join(MANIFEST), kv.to_text())?;
    Ok(())
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", manifest.display()),
        ))
    })?;
    let kv = KeyValues::parse(&text)?;
    let mut r = kv.reader();
    let names: Option<Vec<String>> = r.list("variables")?;
    let counts = [
        r.or("count.train", 0usize)?,
        r.or("count.validation", 0usize)?,
        r.or("count.test", 0usize)?,
    ];
    r.finish()?;
    let mut samples = Vec::new();
    for (split, n) in Split::ALL.into_iter().zip(counts) {
        for i in 0..n {
            let (pi, pt) = sample_paths(dir, split, i);
            let mut input = read_gridseq(&pi)?;
            let mut target = read_gridseq(&pt)?;
            if let Some(names) = &names {
                if names.len() != input.dims().c {
                    return Err(config_err!(
                        "manifest lists {} variables, {} has {} channels",
                        names.len(),
                        pi.display(),
                        input.dims().c
                    ));
                }
                input = input.with_variable_names(names.clone())?;
                target = target.with_variable_names(names.clone())?;
            }
            samples.push(SamplePair::new(input, target, split)?);
        }
    }
    Dataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthConfig};

    #[test]
    fn dataset_round_trip() {
        let cfg = SynthConfig {
            n_train: 3,
            n_validation: 2,
            n_test: 1,
            height: 8,
            width: 8,
            channels: vec!["temperature".into(), "crr_intensity".into()],
            ..SynthConfig::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), &d).unwrap();
        assert_eq!(read_dataset(tmp.path()).unwrap(), d);
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(read_dataset(tmp.path()), Err(Error::Io(_))));
    }
}
