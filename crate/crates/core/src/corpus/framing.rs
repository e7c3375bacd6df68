use ndarray::{Array2, ArrayView1, Axis};

use super::Waveform;
use crate::error::{Error, Result};

/// Fixed-length analysis frames, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    frames: Array2<f64>,
    sample_rate: u32,
    frame_length_ms: f64,
    overlap_fraction: f64,
    hop: usize,
    source_id: String,
    label: Option<String>,
}

impl FrameSet {
    /// Wrap an existing frame matrix (for synthetic ensembles).
    pub fn from_frames(frames: Array2<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if frames.ncols() == 0 {
            return Err(Error::invalid("frames must have at least one sample"));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("frames contain non-finite samples"));
        }
        let m = frames.ncols();
        Ok(FrameSet {
            frames,
            sample_rate,
            frame_length_ms: m as f64 * 1000.0 / sample_rate as f64,
            overlap_fraction: 0.0,
            hop: m,
            source_id: source_id.into(),
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> ArrayView1<'_, f64> {
        self.frames.row(i)
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = ArrayView1<'_, f64>> {
        self.frames.rows().into_iter()
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    /// Frame length M in samples.
    pub fn frame_len(&self) -> usize {
        self.frames.ncols()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame_length_ms(&self) -> f64 {
        self.frame_length_ms
    }

    pub fn overlap_fraction(&self) -> f64 {
        self.overlap_fraction
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Stack frame sets with identical geometry into one ensemble.
    pub fn concat(sets: &[FrameSet], source_id: impl Into<String>) -> Result<FrameSet> {
        let first = sets.first().ok_or_else(|| Error::invalid("no frame sets to concatenate"))?;
        if let Some(bad) = sets
            .iter()
            .find(|s| s.frame_len() != first.frame_len() || s.sample_rate != first.sample_rate)
        {
            return Err(Error::invalid(format!(
                "frame set {} has geometry ({} samples @ {} Hz), expected ({} @ {})",
                bad.source_id,
                bad.frame_len(),
                bad.sample_rate,
                first.frame_len(),
                first.sample_rate
            )));
        }
        let views: Vec<_> = sets.iter().map(|s| s.frames.view()).collect();
        let frames = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
        let label = first.label.clone().filter(|l| sets.iter().all(|s| s.label.as_ref() == Some(l)));
        Ok(FrameSet {
            frames,
            source_id: source_id.into(),
            label,
            ..first.clone()
        })
    }
}

/// Frame length in samples, `round(frame_ms * rate / 1000)`.
pub fn frame_len_samples(frame_ms: f64, sample_rate: u32) -> usize {
    (frame_ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Hop in samples, `max(1, floor(M * (1 - overlap)))`.
pub fn hop_samples(frame_len: usize, overlap_fraction: f64) -> usize {
    ((frame_len as f64 * (1.0 - overlap_fraction)).floor() as usize).max(1)
}

/// Split a waveform into overlapping frames without padding the tail.
pub fn frame_signal(w: &Waveform, frame_ms: f64, overlap_fraction: f64) -> Result<FrameSet> {
    if !(frame_ms > 0.0 && frame_ms.is_finite()) {
        return Err(Error::invalid(format!("frame length {frame_ms} ms must be positive")));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::invalid(format!("overlap fraction {overlap_fraction} outside [0, 1)")));
    }
    let m = frame_len_samples(frame_ms, w.sample_rate());
    if m == 0 {
        return Err(Error::invalid(format!(
            "{frame_ms} ms at {} Hz rounds to an empty frame",
            w.sample_rate()
        )));
    }
    let len = w.len();
    if len < m {
        return Err(Error::InvalidData(format!(
            "{}: {} samples is shorter than one {}-sample frame",
            w.source_id(),
            len,
            m
        )));
    }
    let hop = hop_samples(m, overlap_fraction);
    let count = (len - m) / hop + 1;
    let samples = w.samples();
    let frames = Array2::from_shape_fn((count, m), |(i, j)| samples[i * hop + j]);
    Ok(FrameSet {
        frames,
        sample_rate: w.sample_rate(),
        frame_length_ms: frame_ms,
        overlap_fraction,
        hop,
        source_id: w.source_id().to_string(),
        label: None,
    })
}

/// Frame every segment and stack the results.
///
/// Segments shorter than one frame are skipped; the number skipped is
/// returned alongside the ensemble and logged.
pub fn frame_segments(
    segments: &[Waveform],
    frame_ms: f64,
    overlap_fraction: f64,
    label: &str,
) -> Result<(FrameSet, usize)> {
    let mut sets = Vec::with_capacity(segments.len());
    let mut skipped = 0;
    for seg in segments {
        let m = frame_len_samples(frame_ms, seg.sample_rate());
        if seg.len() < m || m == 0 {
            skipped += 1;
            continue;
        }
        sets.push(frame_signal(seg, frame_ms, overlap_fraction)?);
    }
    if skipped > 0 {
        log::info!("{label}: skipped {skipped} of {} segments shorter than one frame", segments.len());
    }
    if sets.is_empty() {
        return Err(Error::InvalidData(format!("{label}: no segment is long enough for one frame")));
    }
    let mut out = FrameSet::concat(&sets, label)?;
    out.label = Some(label.to_string());
    out.frame_length_ms = frame_ms;
    out.overlap_fraction = overlap_fraction;
    Ok((out, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wave(n: usize, rate: u32) -> Waveform {
        Waveform::new((0..n).map(|i| (i as f64 * 0.37).sin() * 0.5).collect(), rate, "w").unwrap()
    }

    #[test]
    fn ten_ms_half_overlap_at_16k() {
        let f = frame_signal(&wave(16000, 16000), 10.0, 0.5).unwrap();
        assert_eq!(f.frame_len(), 160);
        assert_eq!(f.hop(), 80);
    }

    #[test]
    fn exactly_one_frame() {
        for ov in [0.0, 0.3, 0.5, 0.9] {
            let f = frame_signal(&wave(160, 16000), 10.0, ov).unwrap();
            assert_eq!(f.len(), 1);
        }
    }

    #[test]
    fn thousand_samples_give_eleven_frames() {
        let w = wave(1000, 16000);
        let f = frame_signal(&w, 10.0, 0.5).unwrap();
        assert_eq!(f.len(), 11);
        assert_eq!(f.frame(10)[0], w.samples()[800]);
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(frame_signal(&wave(159, 16000), 10.0, 0.5).is_err());
        assert!(frame_signal(&wave(500, 16000), 0.0, 0.5).is_err());
        assert!(frame_signal(&wave(500, 16000), 10.0, 1.0).is_err());
    }

    #[test]
    fn short_segments_are_skipped() {
        let segs = vec![wave(100, 16000), wave(400, 16000), wave(160, 16000)];
        let (f, skipped) = frame_segments(&segs, 10.0, 0.5, "aa").unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(f.len(), 4 + 1);
        assert_eq!(f.label(), Some("aa"));
    }

    proptest! {
        #[test]
        fn frames_are_contiguous_slices(
            len in 1usize..3000,
            frame_ms in 0.5f64..40.0,
            overlap in 0.0f64..0.95,
        ) {
            let w = wave(len, 8000);
            let m = frame_len_samples(frame_ms, 8000);
            match frame_signal(&w, frame_ms, overlap) {
                Ok(f) => {
                    let hop = hop_samples(m, overlap);
                    prop_assert_eq!(f.len(), (len - m) / hop + 1);
                    for i in 0..f.len() {
                        let row = f.frame(i);
                        prop_assert_eq!(row.as_slice().unwrap(), &w.samples()[i * hop..i * hop + m]);
                    }
                }
                Err(_) => prop_assert!(m == 0 || len < m),
            }
        }
    }
}
