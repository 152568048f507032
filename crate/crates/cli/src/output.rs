use std::fs;
use std::path::{Path, PathBuf};

use bandlab::{Error, Result};

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes every file or none: contents go to temporary siblings first and
/// are renamed into place only once all of them are on disk. A directory
/// created here is removed again on failure.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    let created = !dir.exists();
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| {
        for (name, text) in files {
            let target = dir.join(name);
            let tmp = dir.join(format!(".{name}.partial"));
            fs::write(&tmp, text).map_err(|e| io(&tmp, e))?;
            staged.push((tmp, target));
        }
        for (tmp, target) in &staged {
            fs::rename(tmp, target).map_err(|e| io(target, e))?;
        }
        Ok(staged.iter().map(|(_, t)| t.clone()).collect())
    })();
    if result.is_err() {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        if created {
            let _ = fs::remove_dir_all(dir);
        }
    }
    result
}
