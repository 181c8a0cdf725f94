//! Synthetic datasets: one random prototype per class, patterns drawn by
//! flipping prototype pixels independently.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use rand::Rng as _;
use rbmlab::rng;

use crate::config::{bail_usage, check_positive};
use crate::error::{Failure, ResultExt};
use crate::output::write_atomic;

#[derive(Args, Debug, Clone)]
pub struct GenDataArgs {
    /// Directory receiving train.csv and test.csv
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub n_pixels: usize,
    #[arg(long, default_value_t = 10)]
    pub n_classes: usize,
    /// Training patterns per class
    #[arg(long, default_value_t = 50)]
    pub n_train: usize,
    /// Test patterns per class
    #[arg(long, default_value_t = 20)]
    pub n_test: usize,
    /// Probability that a prototype pixel is flipped
    #[arg(long, default_value_t = 0.1)]
    pub flip_prob: f64,
    /// Intensity written for an on pixel
    #[arg(long, default_value_t = 16)]
    pub intensity: u32,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
}

fn prototypes(n_classes: usize, n_pixels: usize, seed: u64) -> Vec<Vec<bool>> {
    (0..n_classes)
        .map(|c| {
            let mut r = rng::substream(seed, &[0, c as u64]);
            (0..n_pixels).map(|_| r.random_bool(0.5)).collect()
        })
        .collect()
}

fn split_csv(args: &GenDataArgs, protos: &[Vec<bool>], stream: u64, per_class: usize) -> String {
    let mut out = String::new();
    let mut r = rng::substream(args.rng_seed, &[stream]);
    // classes interleaved so a prefix of the file still covers every class
    for _ in 0..per_class {
        for (c, proto) in protos.iter().enumerate() {
            for &on in proto {
                let bit = on ^ r.random_bool(args.flip_prob);
                let _ = write!(out, "{},", if bit { args.intensity } else { 0 });
            }
            let _ = writeln!(out, "{c}");
        }
    }
    out
}

pub fn run(args: GenDataArgs) -> Result<(), Failure> {
    check_positive("n_pixels", args.n_pixels)?;
    check_positive("n_train", args.n_train)?;
    check_positive("n_test", args.n_test)?;
    if args.n_classes < 2 {
        return bail_usage("n_classes must be at least 2".into());
    }
    if !(0.0..=1.0).contains(&args.flip_prob) {
        return bail_usage("flip_prob must lie in [0, 1]".into());
    }
    if args.intensity == 0 {
        return bail_usage("intensity must be positive".into());
    }
    let protos = prototypes(args.n_classes, args.n_pixels, args.rng_seed);
    for (name, stream, n) in [("train.csv", 1, args.n_train), ("test.csv", 2, args.n_test)] {
        let path = args.out.join(name);
        write_atomic(&path, split_csv(&args, &protos, stream, n).as_bytes()).runtime()?;
        println!("wrote {} ({} patterns)", path.display(), n * args.n_classes);
    }
    Ok(())
}
