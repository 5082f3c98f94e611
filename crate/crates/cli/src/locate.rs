//! Maps a field path such as `state_sets[3].lower[1]` to a line of the
//! source document.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Key(String),
    Index(usize),
}

/// Splits `a.b[2].c` (or `a.b.2.c`) into segments.
pub fn parse_path(path: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    for part in path.split('.').filter(|p| !p.is_empty()) {
        let (head, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if !head.is_empty() {
            out.push(match head.parse::<usize>() {
                Ok(i) => Segment::Index(i),
                Err(_) => Segment::Key(head.to_string()),
            });
        }
        while let Some(stripped) = rest.strip_prefix('[') {
            let Some(end) = stripped.find(']') else { break };
            if let Ok(i) = stripped[..end].parse() {
                out.push(Segment::Index(i));
            }
            rest = &stripped[end + 1..];
        }
    }
    out
}

/// 1-based line of the value at `path`, or of its deepest locatable ancestor.
pub fn line_of(text: &str, path: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut pos = skip_ws(bytes, 0);
    let mut found = None;
    for seg in parse_path(path) {
        match descend(bytes, pos, &seg) {
            Some(p) => {
                pos = p;
                found = Some(p);
            }
            None => break,
        }
    }
    let pos = found.unwrap_or(pos);
    (pos < bytes.len() || found.is_some()).then(|| line_at(bytes, pos))
}

fn line_at(bytes: &[u8], pos: usize) -> usize {
    1 + bytes[..pos.min(bytes.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
}

fn skip_ws(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

/// End of the string literal starting at `pos`.
fn skip_string(bytes: &[u8], mut pos: usize) -> usize {
    pos += 1;
    while pos < bytes.len() {
        match bytes[pos] {
            b'\\' => pos += 2,
            b'"' => return pos + 1,
            _ => pos += 1,
        }
    }
    pos
}

/// End of the value starting at `pos`.
fn skip_value(bytes: &[u8], pos: usize) -> usize {
    match bytes.get(pos) {
        Some(b'"') => skip_string(bytes, pos),
        Some(b'{') | Some(b'[') => {
            let mut depth = 0usize;
            let mut p = pos;
            while p < bytes.len() {
                match bytes[p] {
                    b'"' => {
                        p = skip_string(bytes, p);
                        continue;
                    }
                    b'{' | b'[' => depth += 1,
                    b'}' | b']' => {
                        depth -= 1;
                        if depth == 0 {
                            return p + 1;
                        }
                    }
                    _ => {}
                }
                p += 1;
            }
            p
        }
        _ => {
            let mut p = pos;
            while p < bytes.len() && !matches!(bytes[p], b',' | b'}' | b']') {
                p += 1;
            }
            p
        }
    }
}

/// Position of the child value `seg` inside the container at `pos`.
fn descend(bytes: &[u8], pos: usize, seg: &Segment) -> Option<usize> {
    match (bytes.get(pos)?, seg) {
        (b'{', Segment::Key(key)) => {
            let mut p = skip_ws(bytes, pos + 1);
            while bytes.get(p) == Some(&b'"') {
                let end = skip_string(bytes, p);
                let name = std::str::from_utf8(&bytes[p + 1..end - 1]).ok()?;
                p = skip_ws(bytes, end);
                if bytes.get(p) != Some(&b':') {
                    return None;
                }
                p = skip_ws(bytes, p + 1);
                if name == key {
                    return Some(p);
                }
                p = skip_ws(bytes, skip_value(bytes, p));
                if bytes.get(p) == Some(&b',') {
                    p = skip_ws(bytes, p + 1);
                }
            }
            None
        }
        (b'[', Segment::Index(target)) => {
            let mut p = skip_ws(bytes, pos + 1);
            for _ in 0..*target {
                if matches!(bytes.get(p), None | Some(b']')) {
                    return None;
                }
                p = skip_ws(bytes, skip_value(bytes, p));
                if bytes.get(p) != Some(&b',') {
                    return None;
                }
                p = skip_ws(bytes, p + 1);
            }
            (!matches!(bytes.get(p), None | Some(b']'))).then_some(p)
        }
        _ => None,
    }
}
