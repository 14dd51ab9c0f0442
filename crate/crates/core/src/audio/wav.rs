//! RIFF/WAVE reading (PCM16, float32) and writing (PCM16).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{AudioBuffer, AudioError};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Format {
    tag: u16,
    channels: u16,
    rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::MalformedHeader("fmt chunk shorter than 16 bytes".into()));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID whose
        // first two bytes carry the plain format tag.
        if body.len() < 26 {
            return Err(AudioError::MalformedHeader("short WAVE_FORMAT_EXTENSIBLE".into()));
        }
        tag = u16_at(body, 24);
    }
    if channels == 0 {
        return Err(AudioError::MalformedHeader("zero channels".into()));
    }
    Ok(Format {
        tag,
        channels,
        rate,
        bits,
    })
}

/// Decodes a complete WAV file image.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedHeader("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut format = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size > available {
                    return Err(AudioError::MalformedHeader("fmt chunk overruns file".into()));
                }
                format = Some(parse_fmt(&bytes[body_start..body_start + size])?);
            }
            b"data" => {
                if size > available {
                    return Err(AudioError::TruncatedData);
                }
                data = Some(&bytes[body_start..body_start + size]);
                break;
            }
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    let format = format.ok_or_else(|| AudioError::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedHeader("no data chunk".into()))?;

    let width = match (format.tag, format.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_FLOAT, 32) => 4,
        (tag, bits) => return Err(AudioError::UnsupportedEncoding { format: tag, bits }),
    };
    let n_ch = format.channels as usize;
    let block = width * n_ch;
    if data.len() % block != 0 {
        return Err(AudioError::TruncatedData);
    }
    let frames = data.len() / block;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in data.chunks_exact(block) {
        for (ch, raw) in frame.chunks_exact(width).enumerate() {
            let v = if width == 2 {
                i16::from_le_bytes([raw[0], raw[1]]) as f64 / 32768.0
            } else {
                f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64
            };
            channels[ch].push(v);
        }
    }
    AudioBuffer::from_channels(channels, format.rate)
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_wav(&bytes)
}

fn quantize(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes as 16-bit PCM with a canonical 44-byte header.
pub fn write_wav<W: Write>(buf: &AudioBuffer, mut out: W) -> Result<(), AudioError> {
    let n_ch = buf.channels() as u16;
    let data_len = (buf.frames() * buf.channels() * 2) as u32;
    let rate = buf.sample_rate();
    let mut header = Vec::with_capacity(44);
    header.extend_from_slice(b"RIFF");
    header.extend_from_slice(&(36 + data_len).to_le_bytes());
    header.extend_from_slice(b"WAVEfmt ");
    header.extend_from_slice(&16u32.to_le_bytes());
    header.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    header.extend_from_slice(&n_ch.to_le_bytes());
    header.extend_from_slice(&rate.to_le_bytes());
    header.extend_from_slice(&(rate * n_ch as u32 * 2).to_le_bytes());
    header.extend_from_slice(&(n_ch * 2).to_le_bytes());
    header.extend_from_slice(&16u16.to_le_bytes());
    header.extend_from_slice(b"data");
    header.extend_from_slice(&data_len.to_le_bytes());
    out.write_all(&header)?;

    let mut body = Vec::with_capacity(data_len as usize);
    for f in 0..buf.frames() {
        for ch in 0..buf.channels() {
            body.extend_from_slice(&quantize(buf.samples()[[ch, f]]).to_le_bytes());
        }
    }
    out.write_all(&body)?;
    out.flush()?;
    Ok(())
}

pub fn save_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    write_wav(buf, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(buf: &AudioBuffer) -> Vec<u8> {
        let mut v = Vec::new();
        write_wav(buf, &mut v).unwrap();
        v
    }

    #[test]
    fn silence_round_trip() {
        let b = AudioBuffer::silence(1, 16000, 16000).unwrap();
        let back = read_wav(&encode(&b)).unwrap();
        assert_eq!(back.frames(), 16000);
        assert!(back.channel(0).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn empty_buffer_is_header_only() {
        let b = AudioBuffer::silence(1, 0, 16000).unwrap();
        let bytes = encode(&b);
        assert_eq!(bytes.len(), 44);
        assert_eq!(read_wav(&bytes).unwrap().frames(), 0);
    }

    #[test]
    fn full_scale_and_clamp() {
        assert_eq!(quantize(2.0), 32767);
        assert_eq!(quantize(-2.0), -32768);
        let mut bytes = encode(&AudioBuffer::from_mono(vec![0.0], 16000).unwrap());
        bytes[44..46].copy_from_slice(&32767i16.to_le_bytes());
        let b = read_wav(&bytes).unwrap();
        assert_eq!(b.channel(0)[0], 32767.0 / 32768.0);
    }

    #[test]
    fn sine_round_trip_within_one_lsb() {
        let s: Vec<f64> = (0..16000)
            .map(|n| 0.9 * (std::f64::consts::TAU * 440.0 * n as f64 / 16000.0).sin())
            .collect();
        let b = AudioBuffer::from_mono(s, 16000).unwrap();
        let back = read_wav(&encode(&b)).unwrap();
        let err = b
            .channel(0)
            .iter()
            .zip(back.channel(0))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1.0 / 32768.0, "{err}");
    }

    #[test]
    fn float32_and_stereo_decode() {
        let mut bytes = Vec::new();
        let frames: [[f32; 2]; 3] = [[0.25, -0.5], [1.0, 0.0], [-1.0, 0.125]];
        let data_len = 3 * 2 * 4u32;
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36 + data_len).to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&3u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&22050u32.to_le_bytes());
        bytes.extend_from_slice(&(22050u32 * 8).to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(&32u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&data_len.to_le_bytes());
        for f in frames {
            for s in f {
                bytes.extend_from_slice(&s.to_le_bytes());
            }
        }
        let b = read_wav(&bytes).unwrap();
        assert_eq!((b.channels(), b.frames(), b.sample_rate()), (2, 3, 22050));
        assert_eq!(b.channel(1), &[-0.5, 0.0, 0.125]);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(read_wav(b"RIFX"), Err(AudioError::MalformedHeader(_))));
        let mut bytes = encode(&AudioBuffer::from_mono(vec![0.1; 100], 16000).unwrap());
        bytes.truncate(100);
        assert!(matches!(read_wav(&bytes), Err(AudioError::TruncatedData)));
        let mut bytes = encode(&AudioBuffer::from_mono(vec![0.1; 4], 16000).unwrap());
        bytes[34] = 24;
        assert!(matches!(
            read_wav(&bytes),
            Err(AudioError::UnsupportedEncoding { format: 1, bits: 24 })
        ));
    }
}
