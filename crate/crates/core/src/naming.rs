/// Longest accepted function name.
pub const MAX_NAME_LEN: usize = 63;

/// Function name rule: a DNS-label style `^[a-z][a-z0-9-]{0,62}$`.
pub fn fn_name_check(name: &str) -> bool {
    let bytes = name.as_bytes();
    match bytes.first() {
        Some(b) if b.is_ascii_lowercase() => {}
        _ => return false,
    }
    bytes.len() <= MAX_NAME_LEN
        && bytes[1..]
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'-')
}
