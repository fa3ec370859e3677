//! Writes synthetic lane scenes to disk in the CULane layout, for
//! end-to-end runs of the commands.

use std::path::{Path, PathBuf};

use bezlane::dataset::write_culane;
use bezlane::synthetic::SyntheticImage;

use crate::input::write_text;
use crate::CliError;

/// Writes `list.txt` plus one `.lines.txt` file per image under `dir` and
/// returns the index path.
pub fn write_culane_dataset(dir: &Path, images: &[SyntheticImage]) -> Result<PathBuf, CliError> {
    let mut index = String::new();
    for img in images {
        let key = &img.record.image_key;
        index.push('/');
        index.push_str(key);
        index.push('\n');
        let path = dir.join(key).with_extension("lines.txt");
        write_text(&path, &write_culane(&img.record.lanes))?;
    }
    let index_path = dir.join("list.txt");
    write_text(&index_path, &index)?;
    Ok(index_path)
}
