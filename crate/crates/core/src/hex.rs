//! Canonical opcode hex: lowercase, two characters per byte.

pub fn encode(bytes: &[u8]) -> String {
    hex::encode(bytes)
}

/// Decodes canonical hex. Rejects odd lengths and anything outside `[0-9a-f]`.
pub fn decode(s: &str) -> Result<Vec<u8>, &'static str> {
    if s.len() % 2 != 0 {
        return Err("odd-length hex field");
    }
    if !s.bytes().all(|c| matches!(c, b'0'..=b'9' | b'a'..=b'f')) {
        return Err("non-canonical hex digit");
    }
    hex::decode(s).map_err(|_| "invalid hex")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        assert_eq!(encode(&[0x08, 0x54, 0x6e]), "08546e");
        assert_eq!(decode("08546e").unwrap(), vec![0x08, 0x54, 0x6e]);
        assert_eq!(decode("").unwrap(), Vec::<u8>::new());
        assert!(decode("0854a").is_err());
        assert!(decode("6E").is_err());
        assert!(decode("zz").is_err());
    }
}
