/// Blanks out comments and string-literal bodies so rule patterns only see
/// code. Quote characters are kept, line breaks are preserved (including
/// those inside triple-quoted strings), so line numbers stay valid.
///
/// This is a lexical pass, not a parse: string prefixes (`r`, `b`, `f`) are
/// treated as ordinary identifier characters and a backslash always escapes
/// the following character.
pub fn mask_source(source: &str) -> String {
    enum State {
        Code,
        Str { quote: char, triple: bool },
        Comment,
    }

    let chars: Vec<char> = source.chars().collect();
    let mut out = String::with_capacity(source.len());
    let mut state = State::Code;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match state {
            State::Code => match c {
                '#' => {
                    state = State::Comment;
                    out.push(' ');
                }
                '"' | '\'' => {
                    let triple = chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c);
                    if triple {
                        out.extend([c, c, c]);
                        i += 2;
                    } else {
                        out.push(c);
                    }
                    state = State::Str { quote: c, triple };
                }
                _ => out.push(c),
            },
            State::Comment => {
                if c == '\n' {
                    state = State::Code;
                    out.push('\n');
                } else {
                    out.push(' ');
                }
            }
            State::Str { quote, triple } => {
                if c == '\\' {
                    out.push(' ');
                    if let Some(&next) = chars.get(i + 1) {
                        out.push(if next == '\n' { '\n' } else { ' ' });
                        i += 1;
                    }
                } else if c == quote
                    && (!triple || (chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c)))
                {
                    if triple {
                        out.extend([c, c, c]);
                        i += 2;
                    } else {
                        out.push(c);
                    }
                    state = State::Code;
                } else if c == '\n' {
                    out.push('\n');
                    if !triple {
                        // unterminated single-line string ends at the line break
                        state = State::Code;
                    }
                } else {
                    out.push(' ');
                }
            }
        }
        i += 1;
    }
    out
}
