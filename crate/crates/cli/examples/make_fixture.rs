//! Writes the demo fixture: `cargo run -p corrstress-cli --example make_fixture -- <dir> [seed]`.

#[path = "../tests/common/fixture.rs"]
mod fixture;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "fixture".into());
    let seed = args
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(fixture::DEFAULT_SEED);
    fixture::write_fixture(std::path::Path::new(&dir), 1000, seed, "out")?;
    println!("fixture written to {dir}");
    Ok(())
}
