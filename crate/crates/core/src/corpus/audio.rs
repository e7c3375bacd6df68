use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Waveform, PCM_SCALE};
use crate::error::{Error, Result};

const SPHERE_MAGIC: &[u8] = b"NIST_1A";
const SPHERE_HEADER_LEN: usize = 1024;

/// Container selection for [`read_audio`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AudioFormat {
    /// Detect from the leading magic bytes (`RIFF` or `NIST_1A`).
    #[default]
    Auto,
    Wav,
    Sphere,
}

/// Read a mono 16-bit PCM file into a [`Waveform`] scaled by 1/32768.
pub fn read_audio(path: impl AsRef<Path>, format: AudioFormat) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = match format {
        AudioFormat::Auto if bytes.starts_with(b"RIFF") => AudioFormat::Wav,
        AudioFormat::Auto if bytes.starts_with(SPHERE_MAGIC) => AudioFormat::Sphere,
        AudioFormat::Auto => {
            return Err(Error::UnsupportedAudio {
                path: path.to_path_buf(),
                reason: "unrecognized container (expected RIFF or NIST_1A magic)".into(),
            })
        }
        f => f,
    };
    let (pcm, rate) = match format {
        AudioFormat::Wav => decode_wav(&bytes, path)?,
        AudioFormat::Sphere => decode_sphere(&bytes, path)?,
        AudioFormat::Auto => unreachable!(),
    };
    if pcm.is_empty() {
        return Err(malformed(path, "file holds no samples"));
    }
    let samples = pcm.into_iter().map(|s| s as f64 / PCM_SCALE).collect();
    Waveform::new(samples, rate, path.to_string_lossy())
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedAudio {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedAudio {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn decode_wav(bytes: &[u8], path: &Path) -> Result<(Vec<i16>, u32)> {
    let mut reader = hound::WavReader::new(std::io::Cursor::new(bytes)).map_err(|e| match e {
        hound::Error::Unsupported => unsupported(path, "unsupported WAV encoding"),
        other => malformed(path, other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(unsupported(path, "not integer PCM"));
    }
    if spec.channels != 1 {
        return Err(unsupported(path, format!("{} channels, expected mono", spec.channels)));
    }
    if spec.bits_per_sample != 16 {
        return Err(unsupported(path, format!("{}-bit samples, expected 16", spec.bits_per_sample)));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| malformed(path, format!("data chunk declares {declared} samples: {e}")))?;
    if samples.len() != declared {
        return Err(malformed(
            path,
            format!("data chunk declares {declared} samples, found {}", samples.len()),
        ));
    }
    Ok((samples, spec.sample_rate))
}

struct SphereHeader {
    sample_rate: u32,
    sample_count: usize,
    big_endian: bool,
}

fn parse_sphere_header(bytes: &[u8], path: &Path) -> Result<SphereHeader> {
    if bytes.len() < SPHERE_HEADER_LEN {
        return Err(malformed(path, "file shorter than the 1024-byte SPHERE header"));
    }
    let text = String::from_utf8_lossy(&bytes[..SPHERE_HEADER_LEN]);
    let mut lines = text.split('\n');
    if lines.next().map(str::trim) != Some("NIST_1A") {
        return Err(malformed(path, "missing NIST_1A magic line"));
    }
    let declared: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| malformed(path, "missing header length line"))?;
    if declared != SPHERE_HEADER_LEN {
        return Err(unsupported(path, format!("{declared}-byte header, only 1024 is supported")));
    }

    let mut sample_rate = None;
    let mut sample_count = None;
    let mut n_bytes = None;
    let mut channels = None;
    let mut byte_format = None;
    let mut coding = None;
    let mut ended = false;
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.trim() == "end_head" {
            ended = true;
            break;
        }
        let mut parts = line.splitn(3, ' ');
        let (Some(key), Some(kind), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        let int = || {
            value
                .trim()
                .parse::<i64>()
                .map_err(|_| malformed(path, format!("header field {key}: bad integer {value:?}")))
        };
        match (key, kind) {
            ("sample_rate", "-i") => sample_rate = Some(int()?),
            ("sample_rate", "-r") => {
                let r: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| malformed(path, format!("bad sample_rate {value:?}")))?;
                sample_rate = Some(r.round() as i64);
            }
            ("sample_count", _) => sample_count = Some(int()?),
            ("sample_n_bytes", _) => n_bytes = Some(int()?),
            ("channel_count", _) => channels = Some(int()?),
            ("sample_byte_format", _) => byte_format = Some(value.trim().to_string()),
            ("sample_coding", _) => coding = Some(value.trim().to_ascii_lowercase()),
            _ => {}
        }
    }
    if !ended {
        return Err(malformed(path, "header has no end_head marker"));
    }
    if let Some(c) = coding {
        if c != "pcm" {
            return Err(unsupported(path, format!("sample_coding {c:?}, only uncompressed pcm is supported")));
        }
    }
    let channels = channels.unwrap_or(1);
    if channels != 1 {
        return Err(unsupported(path, format!("{channels} channels, expected mono")));
    }
    let n_bytes = n_bytes.ok_or_else(|| malformed(path, "missing sample_n_bytes"))?;
    if n_bytes != 2 {
        return Err(unsupported(path, format!("{n_bytes}-byte samples, expected 2")));
    }
    let sample_rate = sample_rate
        .filter(|&r| r > 0 && r <= u32::MAX as i64)
        .ok_or_else(|| malformed(path, "missing or invalid sample_rate"))? as u32;
    let sample_count = sample_count
        .filter(|&c| c >= 0)
        .ok_or_else(|| malformed(path, "missing or invalid sample_count"))? as usize;
    let big_endian = match byte_format.as_deref() {
        None | Some("01") => false,
        Some("10") => true,
        Some(other) => return Err(unsupported(path, format!("sample_byte_format {other:?}"))),
    };
    Ok(SphereHeader {
        sample_rate,
        sample_count,
        big_endian,
    })
}

fn decode_sphere(bytes: &[u8], path: &Path) -> Result<(Vec<i16>, u32)> {
    let header = parse_sphere_header(bytes, path)?;
    let body = &bytes[SPHERE_HEADER_LEN..];
    let expected = header.sample_count * 2;
    if body.len() != expected {
        return Err(malformed(
            path,
            format!(
                "header sample_count {} needs {} body bytes, found {}",
                header.sample_count,
                expected,
                body.len()
            ),
        ));
    }
    let samples = body
        .chunks_exact(2)
        .map(|b| {
            let pair = [b[0], b[1]];
            if header.big_endian {
                i16::from_be_bytes(pair)
            } else {
                i16::from_le_bytes(pair)
            }
        })
        .collect();
    Ok((samples, header.sample_rate))
}

/// Write a mono 16-bit PCM RIFF-WAV file.
pub fn write_wav(path: impl AsRef<Path>, waveform: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: waveform.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => malformed(path, other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for s in waveform.to_pcm16() {
        writer.write_sample(s).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

/// Write an uncompressed little-endian NIST-SPHERE file with a 1024-byte header.
pub fn write_sphere(path: impl AsRef<Path>, waveform: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let pcm = waveform.to_pcm16();
    let fields = format!(
        "NIST_1A\n   1024\nsample_count -i {}\nsample_rate -i {}\nchannel_count -i 1\n\
         sample_n_bytes -i 2\nsample_byte_format -s2 01\nsample_coding -s3 pcm\n\
         sample_sig_bits -i 16\nend_head\n",
        pcm.len(),
        waveform.sample_rate()
    );
    let mut out = Vec::with_capacity(SPHERE_HEADER_LEN + 2 * pcm.len());
    out.extend_from_slice(fields.as_bytes());
    out.resize(SPHERE_HEADER_LEN, b' ');
    for s in pcm {
        out.extend_from_slice(&s.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled RIFF-WAV bytes, independent of the writer under test.
    fn riff_bytes(samples: &[i16], rate: u32, channels: u16, bits: u16, format_tag: u16) -> Vec<u8> {
        let block = channels * bits / 8;
        let data_len = (samples.len() * 2) as u32;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data_len).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&format_tag.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        b.extend_from_slice(&(rate * block as u32).to_le_bytes());
        b.extend_from_slice(&block.to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&data_len.to_le_bytes());
        for s in samples {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    fn write_bytes(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn wav_samples_are_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_bytes(&dir, "a.wav", &riff_bytes(&[0, 16384, -16384], 16000, 1, 16, 1));
        let w = read_audio(&p, AudioFormat::Auto).unwrap();
        assert_eq!(w.samples(), &[0.0, 0.5, -0.5]);
        assert_eq!(w.sample_rate(), 16000);
    }

    #[test]
    fn full_scale_sine_round_trips() {
        // 1 s of 100 Hz at 8 kHz, peak code 32767 at the quarter period
        let pcm: Vec<i16> = (0..8000)
            .map(|t| (32767.0 * (2.0 * std::f64::consts::PI * 100.0 * t as f64 / 8000.0).sin()).round() as i16)
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = write_bytes(&dir, "sine.wav", &riff_bytes(&pcm, 8000, 1, 16, 1));
        let w = read_audio(&p, AudioFormat::Wav).unwrap();
        let peak = w.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert_eq!(peak, 32767.0 / 32768.0);
        assert_eq!(w.to_pcm16(), pcm);
    }

    #[test]
    fn wav_rejects_stereo_and_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_bytes(&dir, "st.wav", &riff_bytes(&[1, 2, 3, 4], 16000, 2, 16, 1));
        assert!(matches!(read_audio(&p, AudioFormat::Auto), Err(Error::UnsupportedAudio { .. })));
        let p = write_bytes(&dir, "8.wav", &riff_bytes(&[1, 2], 16000, 1, 8, 1));
        assert!(matches!(read_audio(&p, AudioFormat::Auto), Err(Error::UnsupportedAudio { .. })));
        let p = write_bytes(&dir, "f.wav", &riff_bytes(&[1, 2], 16000, 1, 16, 3));
        assert!(read_audio(&p, AudioFormat::Auto).is_err());
    }

    #[test]
    fn wav_truncated_body_is_an_error() {
        let mut b = riff_bytes(&[1, 2, 3, 4, 5], 16000, 1, 16, 1);
        b.truncate(b.len() - 4);
        let dir = tempfile::tempdir().unwrap();
        let p = write_bytes(&dir, "t.wav", &b);
        assert!(read_audio(&p, AudioFormat::Auto).is_err());
    }

    fn sphere_bytes(header_fields: &str, body: &[i16]) -> Vec<u8> {
        let mut b = format!("NIST_1A\n   1024\n{header_fields}end_head\n").into_bytes();
        b.resize(1024, b' ');
        for s in body {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    #[test]
    fn sphere_reads_timit_style_header() {
        let fields = "database_id -s5 TIMIT\nsample_count -i 3\nsample_rate -i 16000\n\
                      channel_count -i 1\nsample_byte_format -s2 01\nsample_n_bytes -i 2\n";
        let dir = tempfile::tempdir().unwrap();
        let p = write_bytes(&dir, "a.sph", &sphere_bytes(fields, &[0, 16384, -32768]));
        let w = read_audio(&p, AudioFormat::Auto).unwrap();
        assert_eq!(w.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(w.sample_rate(), 16000);
    }

    #[test]
    fn sphere_short_body_is_an_error() {
        let fields = "sample_count -i 10\nsample_rate -i 16000\nsample_n_bytes -i 2\n";
        let dir = tempfile::tempdir().unwrap();
        let p = write_bytes(&dir, "s.sph", &sphere_bytes(fields, &[1, 2, 3]));
        assert!(matches!(read_audio(&p, AudioFormat::Auto), Err(Error::MalformedAudio { .. })));
    }

    #[test]
    fn sphere_rejects_compressed_coding() {
        let fields = "sample_count -i 2\nsample_rate -i 16000\nsample_n_bytes -i 2\n\
                      sample_coding -s26 pcm,embedded-shorten-v2.00\n";
        let dir = tempfile::tempdir().unwrap();
        let p = write_bytes(&dir, "c.sph", &sphere_bytes(fields, &[1, 2]));
        assert!(matches!(read_audio(&p, AudioFormat::Sphere), Err(Error::UnsupportedAudio { .. })));
    }

    #[test]
    fn writers_round_trip_exact_codes() {
        let pcm: Vec<i16> = vec![0, 1, -1, 32767, -32768, 1234, -4321];
        let w = Waveform::new(pcm.iter().map(|&s| s as f64 / PCM_SCALE).collect(), 8000, "x").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let wav = dir.path().join("x.wav");
        let sph = dir.path().join("x.sph");
        write_wav(&wav, &w).unwrap();
        write_sphere(&sph, &w).unwrap();
        for p in [wav, sph] {
            let back = read_audio(&p, AudioFormat::Auto).unwrap();
            assert_eq!(back.to_pcm16(), pcm);
            assert_eq!(back.sample_rate(), 8000);
        }
    }

    #[test]
    fn unknown_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_bytes(&dir, "x.raw", b"OggS....");
        assert!(read_audio(&p, AudioFormat::Auto).is_err());
    }
}
