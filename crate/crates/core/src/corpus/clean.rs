use alloc::string::String;
use alloc::vec::Vec;

/// Strips HTML tags, URLs, emoticons, @mentions, #hashtags and numerals,
/// collapses whitespace and lowercases. Applied to a fixpoint so that
/// removals which expose new removable material (`"1@user"`) still leave an
/// idempotent result.
pub fn clean_text(raw: &str) -> String {
    let mut cur = single_pass(raw);
    loop {
        let next = single_pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

fn single_pass(raw: &str) -> String {
    let s = strip_html(raw);
    let s = drop_tokens(&s, is_url);
    let s: String = s.chars().filter(|&c| !is_emoticon(c)).collect();
    let s = drop_tokens(&s, |t| t.starts_with('@'));
    let s = drop_tokens(&s, |t| t.starts_with('#'));
    let s: String = s.chars().filter(|c| !c.is_numeric()).collect();
    let lowered: String = s.chars().flat_map(char::to_lowercase).collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes `<...>` spans that open like a tag (`<b>`, `</b>`, `<!-- -->`).
fn strip_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('<') {
        let after = &rest[pos + 1..];
        let opens_tag = after
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '/' || c == '!');
        match after.find('>') {
            Some(end) if opens_tag => {
                out.push_str(&rest[..pos]);
                out.push(' ');
                rest = &after[end + 1..];
            }
            _ => {
                out.push_str(&rest[..=pos]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn is_url(token: &str) -> bool {
    let lower: String = token.chars().take(8).flat_map(char::to_lowercase).collect();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn drop_tokens(s: &str, remove: impl Fn(&str) -> bool) -> String {
    s.split_whitespace()
        .filter(|t| !remove(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Emoji, pictographs, dingbats and their joiners/selectors.
fn is_emoticon(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF   // mahjong .. symbols & pictographs ext-A
        | 0x2600..=0x27BF   // misc symbols, dingbats
        | 0x2300..=0x23FF   // misc technical (⌚, ⏰)
        | 0x2B00..=0x2BFF   // arrows, stars
        | 0xFE00..=0xFE0F   // variation selectors
        | 0x200D            // zero-width joiner
        | 0x20E3            // keycap
        | 0xE0020..=0xE007F // tag characters
    )
}
