//! Byte-for-byte regression of one small configuration per command.
//!
//! Regenerate with `UPDATE_GOLDEN=1 cargo test -p tempered-ot-cli --test golden`.

mod common;

use std::fs;

use common::{companions, golden_configs, golden_dir};

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn outputs_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for (name, cfg) in golden_configs(dir.path()) {
        let status = tempered_ot_cli::run(&cfg, &pool(2)).unwrap();
        assert_eq!(status.exit_code(), 0, "{name}: {status:?}");
        let mut files = vec![name.to_owned()];
        files.extend(companions(name));
        for f in files {
            let got = fs::read(dir.path().join(&f)).unwrap();
            let path = golden_dir().join(&f);
            if update {
                fs::create_dir_all(golden_dir()).unwrap();
                fs::write(&path, &got).unwrap();
            } else {
                let want = fs::read(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
                assert!(got == want, "{f} differs from its golden file");
            }
        }
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = golden_configs(a.path());
    let cb = golden_configs(b.path());
    for ((name, x), (_, y)) in ca.iter().zip(&cb) {
        tempered_ot_cli::run(x, &pool(1)).unwrap();
        tempered_ot_cli::run(y, &pool(3)).unwrap();
        let mut files = vec![name.to_string()];
        files.extend(companions(name));
        for f in files {
            assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{f}");
        }
    }
}
