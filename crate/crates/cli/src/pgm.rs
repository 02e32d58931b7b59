//! 16-bit binary greymap (P5) heatmaps.

use std::fs;
use std::path::Path;

use mtsr::datapipe::GridFrame;
use mtsr::MtsrError;

pub const PGM_MAX: u16 = 65535;

/// Linear map of `[0, max_value]` onto `[0, 65535]`, clamped.
pub fn grey_level(v: f64, max_value: f64) -> u16 {
    let x = (v / max_value).clamp(0.0, 1.0);
    (x * PGM_MAX as f64).round() as u16
}

pub fn encode_pgm(frame: &GridFrame, max_value: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", frame.cols(), frame.rows(), PGM_MAX).into_bytes();
    for &v in frame.values() {
        // 16-bit samples are most significant byte first.
        out.extend_from_slice(&grey_level(v, max_value).to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, frame: &GridFrame, max_value: f64) -> mtsr::Result<()> {
    fs::write(path, encode_pgm(frame, max_value)).map_err(|e| MtsrError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_samples() {
        let f = GridFrame::new(1, 3, vec![0.0, 50.0, 500.0]).unwrap();
        let bytes = encode_pgm(&f, 100.0);
        let header = b"P5\n3 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let body = &bytes[header.len()..];
        assert_eq!(body, &[0, 0, 0x80, 0x00, 0xff, 0xff]);
    }

    #[test]
    fn grey_levels_clamp() {
        assert_eq!(grey_level(-3.0, 10.0), 0);
        assert_eq!(grey_level(10.0, 10.0), 65535);
        assert_eq!(grey_level(1e9, 10.0), 65535);
    }
}
