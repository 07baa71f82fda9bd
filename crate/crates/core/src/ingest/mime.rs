//! RFC 5322 / MIME subset parser for EML files and mbox entries.
//!
//! Works on raw bytes so that arbitrary input never panics: structure is
//! found on byte boundaries and text is decoded only at the leaves.

use base64::engine::general_purpose::{GeneralPurpose, GeneralPurposeConfig};
use base64::engine::DecodePaddingMode;
use base64::Engine;
use sha2::{Digest, Sha256};

use super::html::strip_html;
use super::url::{find_urls, UrlRecord};
use super::{
    domain_of, normalize_address, AttachmentRecord, AuthFlags, AuthResult, EmailDocument,
    IngestError, RawFormat,
};

const MAX_DEPTH: usize = 16;

const LENIENT_B64: GeneralPurpose = GeneralPurpose::new(
    &base64::alphabet::STANDARD,
    GeneralPurposeConfig::new()
        .with_decode_allow_trailing_bits(true)
        .with_decode_padding_mode(DecodePaddingMode::Indifferent),
);

struct Header {
    name: String,
    value: String,
}

struct Headers(Vec<Header>);

impl Headers {
    fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(name))
            .map(|h| h.value.as_str())
    }

    fn all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.0
            .iter()
            .filter(move |h| h.name.eq_ignore_ascii_case(name))
            .map(|h| h.value.as_str())
    }
}

/// Parses one message. `format` selects whether a leading mbox `From ` line
/// and `>From` quoting are expected.
pub fn parse_email(raw: &[u8], format: RawFormat) -> Result<EmailDocument, IngestError> {
    if raw.is_empty() {
        return Err(IngestError::MalformedMessage {
            offset: 0,
            reason: "empty input".into(),
        });
    }
    let unquoted;
    let (bytes, base) = match format {
        RawFormat::Eml => (raw, 0),
        RawFormat::MboxEntry => {
            let skip = if raw.starts_with(b"From ") {
                raw.iter().position(|&b| b == b'\n').map(|p| p + 1).unwrap_or(raw.len())
            } else {
                0
            };
            unquoted = unquote_mbox(&raw[skip..]);
            (unquoted.as_slice(), skip)
        }
    };

    let (headers, body_start) = split_headers(bytes, base)?;
    if headers.0.is_empty() {
        return Err(IngestError::MalformedMessage {
            offset: base,
            reason: "no header fields".into(),
        });
    }

    let raw_hash = hex::encode(Sha256::digest(raw));
    let mut doc = EmailDocument::blank(raw_hash[..16].to_string());
    doc.raw_hash = raw_hash;

    if let Some(from) = headers.get("From") {
        doc.sender_address = normalize_address(&decode_words(from));
        doc.sender_domain = doc.sender_address.as_deref().and_then(domain_of);
    }
    let mut recipients = Vec::new();
    for field in ["To", "Cc"] {
        for value in headers.all(field) {
            for addr in split_address_list(value) {
                if let Some(a) = normalize_address(&addr) {
                    if !recipients.contains(&a) {
                        recipients.push(a);
                    }
                }
            }
        }
    }
    doc.recipient_addresses = recipients;
    doc.reply_to = headers.get("Reply-To").and_then(|v| {
        split_address_list(v)
            .into_iter()
            .find_map(|a| normalize_address(&a))
    });
    doc.subject = headers.get("Subject").map(|s| decode_words(s).trim().to_string()).unwrap_or_default();
    doc.timestamp = headers.get("Date").and_then(parse_date);
    doc.message_id = headers.get("Message-ID").and_then(clean_msg_id);
    doc.in_reply_to = headers.get("In-Reply-To").and_then(clean_msg_id);
    doc.auth_flags = auth_flags(&headers);

    let mut acc = BodyAccumulator::default();
    walk_entity(&headers, bytes, body_start, base, 0, &mut acc)?;

    doc.body = acc.texts.join("\n").trim().to_string();
    let mut seen = std::collections::HashSet::new();
    for (_, u) in find_urls(&doc.body) {
        acc.urls.push(u);
    }
    for u in acc.urls {
        if seen.contains(&u) {
            continue;
        }
        if let Some(rec) = UrlRecord::from_raw(&u) {
            seen.insert(u);
            doc.urls.push(rec);
        }
    }
    let mut att_keys = std::collections::HashSet::new();
    for a in acc.attachments {
        if att_keys.insert((a.filename.clone(), a.digest.clone())) {
            doc.attachments.push(a);
        }
    }
    Ok(doc)
}

/// Splits an mbox file into raw entries on `From ` separator lines.
pub fn split_mbox(raw: &[u8]) -> Vec<&[u8]> {
    let mut starts = Vec::new();
    let mut pos = 0;
    while pos < raw.len() {
        if raw[pos..].starts_with(b"From ") && (pos == 0 || raw[pos - 1] == b'\n') {
            starts.push(pos);
        }
        match raw[pos..].iter().position(|&b| b == b'\n') {
            Some(nl) => pos += nl + 1,
            None => break,
        }
    }
    let mut out = Vec::new();
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).copied().unwrap_or(raw.len());
        let entry = &raw[s..e];
        if entry.iter().any(|b| !b.is_ascii_whitespace()) {
            out.push(entry);
        }
    }
    out
}

/// Parses every entry of an mbox file; entries fail independently.
pub fn parse_mbox(raw: &[u8]) -> Vec<Result<EmailDocument, IngestError>> {
    split_mbox(raw)
        .into_iter()
        .map(|entry| parse_email(entry, RawFormat::MboxEntry))
        .collect()
}

fn unquote_mbox(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len());
    let mut line_start = true;
    let mut i = 0;
    while i < bytes.len() {
        if line_start {
            let quotes = bytes[i..].iter().take_while(|&&b| b == b'>').count();
            if quotes > 0 && bytes[i + quotes..].starts_with(b"From ") {
                i += 1;
            }
        }
        line_start = bytes[i] == b'\n';
        out.push(bytes[i]);
        i += 1;
    }
    out
}

/// Returns the parsed header block and the offset of the first body byte.
fn split_headers(bytes: &[u8], base: usize) -> Result<(Headers, usize), IngestError> {
    let mut pos = 0;
    let mut fields: Vec<Header> = Vec::new();
    loop {
        if pos >= bytes.len() {
            return Err(IngestError::MalformedMessage {
                offset: base + bytes.len(),
                reason: "no blank line separating headers from body".into(),
            });
        }
        let nl = bytes[pos..].iter().position(|&b| b == b'\n');
        let line_end = nl.map(|n| pos + n).unwrap_or(bytes.len());
        let next = nl.map(|n| pos + n + 1).unwrap_or(bytes.len());
        let line = trim_cr(&bytes[pos..line_end]);
        if line.is_empty() {
            if nl.is_none() {
                return Err(IngestError::MalformedMessage {
                    offset: base + pos,
                    reason: "no blank line separating headers from body".into(),
                });
            }
            return Ok((Headers(fields), next));
        }
        if line[0] == b' ' || line[0] == b'\t' {
            if let Some(last) = fields.last_mut() {
                last.value.push(' ');
                last.value.push_str(decode_bytes(line).trim());
            }
        } else if let Some(colon) = line.iter().position(|&b| b == b':') {
            let name = &line[..colon];
            let valid = !name.is_empty() && name.iter().all(|&b| b.is_ascii_graphic());
            if valid {
                fields.push(Header {
                    name: String::from_utf8_lossy(name).into_owned(),
                    value: decode_bytes(&line[colon + 1..]).trim().to_string(),
                });
            } else if fields.is_empty() {
                return Err(IngestError::MalformedMessage {
                    offset: base + pos,
                    reason: "expected a header field".into(),
                });
            }
        } else if fields.is_empty() {
            return Err(IngestError::MalformedMessage {
                offset: base + pos,
                reason: "expected a header field".into(),
            });
        }
        pos = next;
    }
}

fn trim_cr(line: &[u8]) -> &[u8] {
    line.strip_suffix(b"\r").unwrap_or(line)
}

/// UTF-8 when valid, byte-wise Latin-1 otherwise.
fn decode_bytes(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => latin1(bytes),
    }
}

fn latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| b as char).collect()
}

fn decode_charset(bytes: &[u8], charset: Option<&str>) -> String {
    let cs = charset.unwrap_or("us-ascii").to_ascii_lowercase();
    match cs.as_str() {
        "iso-8859-1" | "latin1" | "latin-1" | "iso8859-1" | "windows-1252" | "cp1252" => {
            latin1(bytes)
        }
        _ => decode_bytes(bytes),
    }
}

#[derive(Default)]
struct BodyAccumulator {
    texts: Vec<String>,
    urls: Vec<String>,
    attachments: Vec<AttachmentRecord>,
}

struct ContentType {
    mime: String,
    params: Vec<(String, String)>,
}

impl ContentType {
    fn param(&self, name: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

fn parse_params(value: &str) -> (String, Vec<(String, String)>) {
    let mut parts = split_unquoted(value, ';').into_iter();
    let head = parts.next().unwrap_or_default().trim().to_ascii_lowercase();
    let params = parts
        .filter_map(|p| {
            let (k, v) = p.split_once('=')?;
            Some((
                k.trim().to_ascii_lowercase(),
                v.trim().trim_matches('"').to_string(),
            ))
        })
        .collect();
    (head, params)
}

fn split_unquoted(value: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut angle = 0usize;
    for c in value.chars() {
        match c {
            '"' => quoted = !quoted,
            '<' if !quoted => angle += 1,
            '>' if !quoted => angle = angle.saturating_sub(1),
            _ => {}
        }
        if c == sep && !quoted && angle == 0 {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out
}

fn split_address_list(value: &str) -> Vec<String> {
    split_unquoted(&decode_words(value), ',')
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn content_type(headers: &Headers, default: &str) -> ContentType {
    match headers.get("Content-Type") {
        Some(v) => {
            let (mime, params) = parse_params(v);
            let mime = if mime.contains('/') { mime } else { default.to_string() };
            ContentType { mime, params }
        }
        None => ContentType {
            mime: default.to_string(),
            params: Vec::new(),
        },
    }
}

fn walk_entity(
    headers: &Headers,
    bytes: &[u8],
    body_start: usize,
    base: usize,
    depth: usize,
    acc: &mut BodyAccumulator,
) -> Result<(), IngestError> {
    let body = &bytes[body_start.min(bytes.len())..];
    let ct = content_type(headers, "text/plain");
    let disposition = headers.get("Content-Disposition").map(parse_params);
    let filename = disposition
        .as_ref()
        .and_then(|(_, p)| p.iter().find(|(k, _)| k == "filename").map(|(_, v)| v.clone()))
        .or_else(|| ct.param("name").map(str::to_string))
        .map(|f| decode_words(&f));
    let is_attachment = disposition
        .as_ref()
        .map(|(d, _)| d == "attachment")
        .unwrap_or(false)
        || filename.is_some();

    if ct.mime.starts_with("multipart/") && depth < MAX_DEPTH {
        let Some(boundary) = ct.param("boundary").filter(|b| !b.is_empty()) else {
            acc.texts.push(decode_bytes(body));
            return Ok(());
        };
        let parts = split_multipart(body, boundary.as_bytes());
        if ct.mime == "multipart/alternative" {
            // Alternatives carry the same content; keep the plain one when
            // present but still harvest links from every variant.
            let mut plain = BodyAccumulator::default();
            let mut rich = BodyAccumulator::default();
            for (off, part) in parts {
                let (ph, pstart) = part_headers(part);
                let ptype = content_type(&ph, "text/plain");
                let target = if ptype.mime == "text/plain" { &mut plain } else { &mut rich };
                walk_entity(&ph, part, pstart, base + body_start + off, depth + 1, target)?;
            }
            acc.texts.extend(if plain.texts.is_empty() { rich.texts } else { plain.texts });
            acc.urls.extend(plain.urls);
            acc.urls.extend(rich.urls);
            acc.attachments.extend(plain.attachments);
            acc.attachments.extend(rich.attachments);
        } else {
            for (off, part) in parts {
                let (ph, pstart) = part_headers(part);
                walk_entity(&ph, part, pstart, base + body_start + off, depth + 1, acc)?;
            }
        }
        return Ok(());
    }

    let decoded = decode_transfer(headers, body, base + body_start)?;
    if is_attachment || !(ct.mime.starts_with("text/") || ct.mime == "message/rfc822") {
        acc.attachments.push(AttachmentRecord {
            filename: filename.unwrap_or_default(),
            mime_type: ct.mime.clone(),
            digest: hex::encode(Sha256::digest(&decoded)),
            size_bytes: decoded.len() as u64,
        });
        return Ok(());
    }
    if ct.mime == "message/rfc822" && depth < MAX_DEPTH {
        if let Ok((inner, start)) = split_headers(&decoded, 0) {
            return walk_entity(&inner, &decoded, start, base + body_start, depth + 1, acc);
        }
    }
    let text = decode_charset(&decoded, ct.param("charset"));
    if ct.mime == "text/html" {
        let h = strip_html(&text);
        acc.urls.extend(h.hrefs);
        acc.texts.push(h.text);
    } else {
        acc.texts.push(text);
    }
    Ok(())
}

/// Headers of a MIME part. Parts that start with a blank line, or have no
/// blank line at all, are treated as header-less.
fn part_headers(part: &[u8]) -> (Headers, usize) {
    let first = part.iter().position(|&b| b == b'\n').unwrap_or(part.len());
    if trim_cr(&part[..first]).is_empty() {
        return (Headers(Vec::new()), (first + 1).min(part.len()));
    }
    match split_headers(part, 0) {
        Ok(found) => found,
        Err(_) => (Headers(Vec::new()), 0),
    }
}

/// Splits a multipart body into (offset, part bytes) pairs.
fn split_multipart<'a>(body: &'a [u8], boundary: &[u8]) -> Vec<(usize, &'a [u8])> {
    let mut delim = b"--".to_vec();
    delim.extend_from_slice(boundary);
    let mut parts = Vec::new();
    let mut current: Option<usize> = None;
    let mut pos = 0;
    while pos < body.len() {
        let nl = body[pos..].iter().position(|&b| b == b'\n');
        let line_end = nl.map(|n| pos + n).unwrap_or(body.len());
        let next = nl.map(|n| pos + n + 1).unwrap_or(body.len());
        let line = trim_cr(&body[pos..line_end]);
        if line.starts_with(&delim) {
            let rest = &line[delim.len()..];
            if let Some(start) = current.take() {
                let mut end = pos;
                // The line break before a delimiter belongs to the delimiter.
                if end > start && body[end - 1] == b'\n' {
                    end -= 1;
                    if end > start && body[end - 1] == b'\r' {
                        end -= 1;
                    }
                }
                parts.push((start, &body[start..end]));
            }
            if rest.starts_with(b"--") {
                return parts;
            }
            current = Some(next);
        }
        pos = next;
    }
    if let Some(start) = current {
        parts.push((start, &body[start..]));
    }
    parts
}

fn decode_transfer(headers: &Headers, body: &[u8], offset: usize) -> Result<Vec<u8>, IngestError> {
    let cte = headers
        .get("Content-Transfer-Encoding")
        .map(|v| v.trim().to_ascii_lowercase())
        .unwrap_or_default();
    match cte.as_str() {
        "base64" => {
            let compact: Vec<u8> = body.iter().copied().filter(|b| !b.is_ascii_whitespace()).collect();
            LENIENT_B64
                .decode(&compact)
                .map_err(|e| IngestError::UnsupportedEncoding {
                    offset,
                    reason: format!("invalid base64 payload: {e}"),
                })
        }
        "quoted-printable" => Ok(decode_quoted_printable(body, false)),
        _ => Ok(body.to_vec()),
    }
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Quoted-printable decoding; `header_mode` also maps `_` to space (RFC 2047 Q).
fn decode_quoted_printable(input: &[u8], header_mode: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(input.len());
    let mut i = 0;
    while i < input.len() {
        let b = input[i];
        if b == b'=' {
            if let (Some(&h), Some(&l)) = (input.get(i + 1), input.get(i + 2)) {
                if let (Some(h), Some(l)) = (hex_val(h), hex_val(l)) {
                    out.push(h * 16 + l);
                    i += 3;
                    continue;
                }
            }
            // Soft line break.
            if input.get(i + 1) == Some(&b'\n') {
                i += 2;
                continue;
            }
            if input.get(i + 1) == Some(&b'\r') && input.get(i + 2) == Some(&b'\n') {
                i += 3;
                continue;
            }
            out.push(b);
        } else if header_mode && b == b'_' {
            out.push(b' ');
        } else {
            out.push(b);
        }
        i += 1;
    }
    out
}

/// Decodes RFC 2047 encoded words (`=?charset?B|Q?text?=`). Malformed words
/// are left as they are.
fn decode_words(value: &str) -> String {
    if !value.contains("=?") {
        return value.to_string();
    }
    let mut out = String::new();
    let mut rest = value;
    let mut last_was_word = false;
    while let Some(start) = rest.find("=?") {
        let (before, tail) = rest.split_at(start);
        let decoded = (|| {
            let inner = &tail[2..];
            let q1 = inner.find('?')?;
            let charset = &inner[..q1];
            let after = &inner[q1 + 1..];
            let q2 = after.find('?')?;
            let enc = &after[..q2];
            let payload_and_rest = &after[q2 + 1..];
            let end = payload_and_rest.find("?=")?;
            let payload = &payload_and_rest[..end];
            let bytes = match enc {
                "B" | "b" => LENIENT_B64.decode(payload.as_bytes()).ok()?,
                "Q" | "q" => decode_quoted_printable(payload.as_bytes(), true),
                _ => return None,
            };
            let consumed = 2 + q1 + 1 + q2 + 1 + end + 2;
            Some((decode_charset(&bytes, Some(charset)), consumed))
        })();
        match decoded {
            Some((text, consumed)) => {
                if !(last_was_word && before.trim().is_empty()) {
                    out.push_str(before);
                }
                out.push_str(&text);
                rest = &tail[consumed..];
                last_was_word = true;
            }
            None => {
                out.push_str(before);
                out.push_str("=?");
                rest = &tail[2..];
                last_was_word = false;
            }
        }
    }
    out.push_str(rest);
    out
}

fn parse_date(value: &str) -> Option<i64> {
    let mut v = value.trim().to_string();
    // Drop trailing comments such as "(UTC)".
    if let Some(p) = v.find('(') {
        v.truncate(p);
    }
    let v = v.trim();
    chrono::DateTime::parse_from_rfc2822(v)
        .ok()
        .map(|dt| dt.timestamp())
}

fn clean_msg_id(value: &str) -> Option<String> {
    let v = value.trim();
    let v = match (v.find('<'), v.find('>')) {
        (Some(a), Some(b)) if a < b => &v[a + 1..b],
        _ => v,
    };
    let v = v.trim();
    if v.is_empty() {
        None
    } else {
        Some(v.to_string())
    }
}

fn map_result(token: &str) -> AuthResult {
    match token {
        "pass" => AuthResult::Pass,
        "none" | "neutral" => AuthResult::Absent,
        _ => AuthResult::Fail,
    }
}

fn auth_flags(headers: &Headers) -> AuthFlags {
    let mut flags = AuthFlags::default();
    for value in headers.all("Authentication-Results") {
        let lower = value.to_ascii_lowercase();
        for token in lower.split(|c: char| c == ';' || c.is_whitespace()) {
            let Some((method, result)) = token.split_once('=') else {
                continue;
            };
            let result = result.trim_matches(|c: char| !c.is_ascii_alphanumeric());
            let slot = match method {
                "spf" => &mut flags.spf_pass,
                "dkim" => &mut flags.dkim_pass,
                "dmarc" => &mut flags.dmarc_pass,
                _ => continue,
            };
            if *slot == AuthResult::Absent {
                *slot = map_result(result);
            }
        }
    }
    if flags.spf_pass == AuthResult::Absent {
        if let Some(v) = headers.get("Received-SPF") {
            let first = v.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
            flags.spf_pass = map_result(&first);
        }
    }
    flags
}
