use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One sliding-window chunk in the F-C vertex domain.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphChunk {
    /// `[n, t]` with vertex id `f * C + c`.
    pub vertex_features: Tensor,
    pub chunk_index: usize,
    pub freq: usize,
    pub channels: usize,
}

impl GraphChunk {
    pub fn vertices(&self) -> usize {
        self.vertex_features.shape()[0]
    }

    pub fn window(&self) -> usize {
        self.vertex_features.shape()[1]
    }
}

pub fn check_window(frames: usize, window: usize) -> Result<usize> {
    if window == 0 || frames % window != 0 {
        return Err(Error::WindowMismatch { window, frames });
    }
    Ok(frames / window)
}

/// Splits `[T, F, C]` into `T / t` non-overlapping chunks of `t` frames.
pub fn chunk_time(x: &Tensor, window: usize) -> Result<Vec<GraphChunk>> {
    if x.rank() != 3 {
        return Err(Error::shape("chunk_time", format!("expected [T, F, C], got {:?}", x.shape())));
    }
    let (frames, freq, channels) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let count = check_window(frames, window)?;
    let n = freq * channels;
    let src = x.data();
    Ok((0..count)
        .map(|j| {
            let mut data = vec![0.0; n * window];
            for tau in 0..window {
                let row = &src[(j * window + tau) * n..(j * window + tau + 1) * n];
                for (v, &val) in row.iter().enumerate() {
                    data[v * window + tau] = val;
                }
            }
            GraphChunk {
                vertex_features: Tensor::new(vec![n, window], data).expect("chunk shape"),
                chunk_index: j,
                freq,
                channels,
            }
        })
        .collect())
}

/// Reassembles chunks (in any order) into `[T, F, C]`.
pub fn unchunk(chunks: &[GraphChunk]) -> Result<Tensor> {
    let first = chunks.first().ok_or_else(|| Error::InvalidArgument("no chunks to reassemble".into()))?;
    let (freq, channels, window) = (first.freq, first.channels, first.window());
    let n = freq * channels;
    let count = chunks.len();
    let mut seen = vec![false; count];
    let mut out = vec![0.0; count * window * n];
    for ch in chunks {
        if ch.freq != freq || ch.channels != channels || ch.vertex_features.shape() != [n, window] {
            return Err(Error::shape("unchunk", "chunks disagree in geometry"));
        }
        if ch.chunk_index >= count || std::mem::replace(&mut seen[ch.chunk_index], true) {
            return Err(Error::InvalidArgument(format!("chunk index {} missing or repeated", ch.chunk_index)));
        }
        let d = ch.vertex_features.data();
        for v in 0..n {
            for tau in 0..window {
                out[(ch.chunk_index * window + tau) * n + v] = d[v * window + tau];
            }
        }
    }
    Tensor::new(vec![count * window, freq, channels], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chunk_counts() {
        let x = Tensor::zeros(&[250, 2, 3]);
        assert_eq!(chunk_time(&x, 5).unwrap().len(), 50);
        assert_eq!(chunk_time(&x, 25).unwrap().len(), 10);
        let one = chunk_time(&x, 250).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].vertex_features.shape(), &[6, 250]);
    }

    #[test]
    fn non_dividing_window_reports_both_values() {
        let err = chunk_time(&Tensor::zeros(&[250, 1, 1]), 7).unwrap_err().to_string();
        assert!(err.contains("7") && err.contains("250"), "{err}");
    }

    #[test]
    fn vertex_ids_follow_f_times_c_plus_c() {
        let x = Tensor::from_fn(&[4, 2, 3], |i| i as f64);
        let chunks = chunk_time(&x, 2).unwrap();
        for (j, ch) in chunks.iter().enumerate() {
            for f in 0..2 {
                for c in 0..3 {
                    for tau in 0..2 {
                        assert_eq!(ch.vertex_features.at(&[f * 3 + c, tau]), x.at(&[j * 2 + tau, f, c]));
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn unchunk_inverts_chunk(t in 1usize..12, count in 1usize..6, f in 1usize..4, c in 1usize..4, seed in 0u64..1000) {
            let x = Tensor::from_fn(&[t * count, f, c], |i| ((i as u64 * 2654435761 + seed) % 1009) as f64);
            let mut chunks = chunk_time(&x, t).unwrap();
            chunks.reverse();
            prop_assert_eq!(unchunk(&chunks).unwrap(), x);
        }
    }
}
