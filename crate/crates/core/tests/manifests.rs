use std::path::PathBuf;

use strength_init::experiment::ExperimentManifest;

#[test]
fn shipped_manifests_are_valid() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../manifests");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let m = ExperimentManifest::load(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(m.treatment.is_some());
            n += 1;
        }
    }
    assert!(n >= 3);
}
