//! Regenerates the bundled fitting datasets in `crates/core/data/`.
//!
//! Each table is sampled on an even grid from a published fitted curve
//! `g1 * w^g2 + g3` with 1% multiplicative Gaussian noise and a fixed seed.
//!
//! ```text
//! cargo run -p fogcomp --example make_datasets
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const POINTS: usize = 24;
const NOISE: f64 = 0.01;

struct Source {
    name: &'static str,
    label: &'static str,
    curve: (f64, f64, f64),
    range: (f64, f64),
}

const SOURCES: [Source; 8] = [
    Source {
        name: "gzip_alice",
        label: "GZIP on alice.txt",
        curve: (1.207e-15, 32.28, 0.3),
        range: (2.3, 2.87),
    },
    Source {
        name: "gzip_asyoulik",
        label: "GZIP on asyoulik.txt",
        curve: (6.497e-19, 42.94, 0.303),
        range: (2.2, 2.63),
    },
    Source {
        name: "bz2_alice",
        label: "BZ2 on alice.txt",
        curve: (0.076, 0.7117, 0.579),
        range: (3.4, 11.2),
    },
    Source {
        name: "bz2_asyoulik",
        label: "BZ2 on asyoulik.txt",
        curve: (0.178, 0.478, 0.437),
        range: (3.4, 11.1),
    },
    Source {
        name: "xz_ubuntu",
        label: "XZ on Ubuntu",
        curve: (6.441e-7, 7.062, 1e-7),
        range: (5.4, 7.5),
    },
    Source {
        name: "xz_clearlinux",
        label: "XZ on Clear Linux",
        curve: (1.492e-6, 6.646, 1e-6),
        range: (5.4, 7.5),
    },
    Source {
        name: "zlib_ubuntu",
        label: "ZLIB on Ubuntu",
        curve: (6.019e-76, 108.6, 0.240),
        range: (4.0, 4.92),
    },
    Source {
        name: "zlib_clearlinux",
        label: "ZLIB on Clear Linux",
        curve: (1.436e-68, 97.76, 0.205),
        range: (4.07, 4.93),
    },
];

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir)?;
    for (i, src) in SOURCES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let noise = Normal::new(0.0, NOISE).unwrap();
        let (g1, g2, g3) = src.curve;
        let (lo, hi) = src.range;
        let mut out = String::new();
        writeln!(out, "# {}: normalized execution time vs compression ratio", src.label).unwrap();
        writeln!(out, "# resampled from the fitted curve y = {g1:e} * w^{g2} + {g3}").unwrap();
        writeln!(
            out,
            "# {POINTS} points on [{lo}, {hi}], 1% Gaussian noise, seed {}",
            1000 + i
        )
        .unwrap();
        writeln!(out, "# omega y").unwrap();
        for k in 0..POINTS {
            let w = lo + (hi - lo) * k as f64 / (POINTS - 1) as f64;
            let y = (g1 * w.powf(g2) + g3) * (1.0 + noise.sample(&mut rng));
            writeln!(out, "{w:.6} {y:.8e}").unwrap();
        }
        std::fs::write(dir.join(format!("{}.txt", src.name)), out)?;
    }
    Ok(())
}
