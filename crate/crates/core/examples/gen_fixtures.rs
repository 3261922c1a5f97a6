//! Regenerates the starter study under `fixtures/two_boiler/`:
//!
//! ```text
//! cargo run -p hubplan --example gen_fixtures -- fixtures/two_boiler
//! ```

fn main() {
    let dir = std::env::args_os()
        .nth(1)
        .expect("usage: gen_fixtures <directory>");
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir).expect("create target directory");
    hubplan::fixtures::write_fixture_files(&dir).expect("write study files");
    println!("wrote study files to {}", dir.display());
}
