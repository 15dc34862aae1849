use std::process::Command;

fn main() {
    let pkg = std::env::var("CARGO_PKG_VERSION").unwrap_or_default();
    let described = Command::new("git")
        .args(["describe", "--tags", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let version = match described {
        // a bare hash means no tags; prefix the package version
        Some(d) if !d.starts_with('v') && !d.contains('.') => format!("v{pkg}-g{d}"),
        Some(d) => d,
        None => format!("v{pkg}"),
    };
    println!("cargo:rustc-env=FKBRIDGE_VERSION={version}");
    for path in ["../../.git/HEAD", "../../.git/index", "../../.git/refs/tags"] {
        println!("cargo:rerun-if-changed={path}");
    }
}
