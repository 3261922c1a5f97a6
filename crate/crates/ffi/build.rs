fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets CARGO_MANIFEST_DIR");
    cbindgen::generate(&crate_dir)
        .expect("generate C header")
        .write_to_file(std::path::Path::new(&crate_dir).join("include/hubplan.h"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
