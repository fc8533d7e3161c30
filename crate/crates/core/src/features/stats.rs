use crate::error::{Error, Result};

/// Order and moment statistics of one chunk.
///
/// `variance` is the population variance, `kurtosis` the non-excess
/// standardized fourth moment and `skewness` the standardized third moment.
/// Chunks whose spread is indistinguishable from rounding noise report zero
/// kurtosis and skewness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkStats {
    pub max: f64,
    pub min: f64,
    pub median: f64,
    pub variance: f64,
    pub kurtosis: f64,
    pub skewness: f64,
}

impl ChunkStats {
    pub fn to_array(self) -> [f64; 6] {
        [
            self.max,
            self.min,
            self.median,
            self.variance,
            self.kurtosis,
            self.skewness,
        ]
    }
}

// std below this fraction of the chunk's magnitude counts as zero spread
const DEGENERATE_REL_STD: f64 = 1e-9;

pub fn chunk_stats(chunk: &[f64]) -> Result<ChunkStats> {
    if chunk.is_empty() {
        return Err(Error::Empty("chunk"));
    }
    let n = chunk.len() as f64;
    let mut sorted = chunk.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    let median = if len % 2 == 0 {
        0.5 * (sorted[len / 2 - 1] + sorted[len / 2])
    } else {
        sorted[len / 2]
    };
    let mean = chunk.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in chunk {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let degenerate = m2.sqrt() <= DEGENERATE_REL_STD * mean.abs().max(1.0);
    let (kurtosis, skewness) = if degenerate {
        (0.0, 0.0)
    } else {
        (m4 / (m2 * m2), m3 / m2.powf(1.5))
    };
    Ok(ChunkStats {
        max: sorted[len - 1],
        min: sorted[0],
        median,
        variance: m2,
        kurtosis,
        skewness,
    })
}
