//! Synthetic Gaussian-clusters dataset: one isotropic cluster per class,
//! means uniform in [-1, 1]^K. Desk-scale stand-in for large many-class
//! corpora.

use std::io::Write;
use std::path::Path;

use metal_core::rng::{self, Stream};
use metal_core::rng::RngCore;

use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub features: usize,
    /// Isotropic standard deviation around each class mean.
    pub cluster_spread: f64,
    pub seed: u64,
}

/// Box-Muller over the crate's uniform stream; keeps the whole dataset a
/// pure function of the seed.
fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = rng::uniform_f64(rng).max(f64::MIN_POSITIVE);
    let u2 = rng::uniform_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
}

/// Generate the rows: `(features, label)` per example, classes in order.
pub fn generate(spec: SynthSpec) -> Vec<(Vec<f64>, String)> {
    let mut rng = rng::rng_from_seed(rng::child_seed(spec.seed, Stream::Synthetic, 0));
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.features)
                .map(|_| rng::uniform_range(&mut rng, -1.0, 1.0))
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(spec.classes * spec.per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            let x: Vec<f64> = mean
                .iter()
                .map(|m| m + spec.cluster_spread * standard_normal(&mut rng))
                .collect();
            rows.push((x, format!("c{c:03}")));
        }
    }
    rows
}

/// Write the generated rows as CSV with the label in the first column.
pub fn write_csv(path: &Path, spec: SynthSpec) -> Result<()> {
    let rows = generate(spec);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (values, label) in rows {
        write!(f, "{label}")?;
        for v in values {
            write!(f, ",{v}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    log::info!(
        "wrote {}: {} classes x {} examples, {} features, spread {}",
        path.display(),
        spec.classes,
        spec.per_class,
        spec.features,
        spec.cluster_spread
    );
    Ok(())
}
