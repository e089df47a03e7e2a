//! A small resumable sweep over architectures and K, driven through the CLI entry point.
//!
//! cargo run --release --example sweep_synthetic -- [out.csv]

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep_synthetic.csv".into());
    let args = [
        "subband", "sweep", "--arch-list", "full_band,overlapped_subband", "--k-list", "2,4", "--trials", "2",
        "--steps", "600", "--per-class", "20", "--out", &out,
    ];
    let code = subband_cnn::cli::run(args, &mut std::io::stdout());
    if code == 0 {
        print!("{}", std::fs::read_to_string(&out).expect("sweep output"));
        println!("rerunning skips completed rows; delete {out} to start over");
    }
    std::process::exit(code);
}
