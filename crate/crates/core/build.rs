use std::env;
use std::path::Path;

// The netlib backend links `-lcblas`, but Debian-style systems ship the
// CBLAS symbols inside libopenblas without a separate libcblas.so. Alias
// one in OUT_DIR when the real thing is missing.
fn main() {
    let have_cblas = ["/usr/lib/x86_64-linux-gnu", "/usr/lib", "/usr/local/lib"]
        .iter()
        .any(|d| Path::new(d).join("libcblas.so").exists());
    if have_cblas {
        return;
    }
    let openblas = ["/usr/lib/x86_64-linux-gnu/libopenblas.so", "/usr/lib/libopenblas.so"]
        .iter()
        .find(|p| Path::new(p).exists());
    if let Some(openblas) = openblas {
        let out_dir = env::var("OUT_DIR").expect("OUT_DIR set by cargo");
        let alias = Path::new(&out_dir).join("libcblas.so");
        if !alias.exists() {
            std::os::unix::fs::symlink(openblas, &alias).expect("symlink libcblas alias");
        }
        println!("cargo:rustc-link-search=native={out_dir}");
    }
}
