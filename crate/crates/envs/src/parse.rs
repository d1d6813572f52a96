//! Lenient extraction of action expressions from free-form replies.

/// Content of the first `{...}` group (no nested braces) accepted by `accept`.
pub(crate) fn first_braced<T>(reply: &str, mut accept: impl FnMut(&str) -> Option<T>) -> Option<T> {
    let mut rest = reply;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find(['{', '}']) {
            Some(close) if after.as_bytes()[close] == b'}' => {
                if let Some(v) = accept(after[..close].trim()) {
                    return Some(v);
                }
                rest = &after[close + 1..];
            }
            Some(nested) => rest = &after[nested..],
            None => return None,
        }
    }
    None
}

/// Lowercase, drop braces and quotes, collapse whitespace.
pub(crate) fn normalize(reply: &str) -> String {
    let cleaned: String = reply
        .chars()
        .map(|c| match c {
            '{' | '}' | '`' | '"' | '*' => ' ',
            c => c.to_ascii_lowercase(),
        })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One-decimal rendering used for every numeric identifier.
pub(crate) fn fmt1(x: f64) -> String {
    format!("{x:.1}")
}

/// The first `{ 'key': 'value', ... }` mapping in `reply`.
///
/// Keys and values must be quoted with `'` or `"`. Duplicate keys are kept so
/// callers can detect conflicting assignments. `{}` is a valid empty mapping.
pub(crate) fn first_mapping(reply: &str) -> Option<Vec<(String, String)>> {
    reply
        .char_indices()
        .filter(|&(_, c)| c == '{')
        .find_map(|(i, _)| MappingParser::new(&reply[i..]).parse())
}

struct MappingParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> MappingParser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn eat(&mut self, want: char) -> Option<()> {
        self.skip_ws();
        (self.bump()? == want).then_some(())
    }

    fn quoted(&mut self) -> Option<String> {
        self.skip_ws();
        let quote = self.bump()?;
        if quote != '\'' && quote != '"' {
            return None;
        }
        let start = self.pos;
        let len = self.src[start..].find(quote)?;
        self.pos = start + len + 1;
        Some(self.src[start..start + len].trim().to_string())
    }

    fn parse(mut self) -> Option<Vec<(String, String)>> {
        self.eat('{')?;
        let mut entries = Vec::new();
        self.skip_ws();
        if self.peek() == Some('}') {
            return Some(entries);
        }
        loop {
            let key = self.quoted()?;
            self.eat(':')?;
            let value = self.quoted()?;
            entries.push((key, value));
            self.skip_ws();
            match self.bump()? {
                ',' => {
                    self.skip_ws();
                    if self.peek() == Some('}') {
                        return Some(entries);
                    }
                }
                '}' => return Some(entries),
                _ => return None,
            }
        }
    }
}
