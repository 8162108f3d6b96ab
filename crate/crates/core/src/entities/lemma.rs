//! Rule-based English lemmatizer for verbs, plus noun number variants.

const VERB_EXCEPTIONS: &[(&str, &str)] = &[
    ("am", "be"),
    ("are", "be"),
    ("is", "be"),
    ("was", "be"),
    ("were", "be"),
    ("been", "be"),
    ("being", "be"),
    ("'m", "be"),
    ("'re", "be"),
    ("'s", "be"),
    ("has", "have"),
    ("had", "have"),
    ("having", "have"),
    ("does", "do"),
    ("did", "do"),
    ("done", "do"),
    ("doing", "do"),
    ("goes", "go"),
    ("went", "go"),
    ("gone", "go"),
    ("going", "go"),
    ("made", "make"),
    ("took", "take"),
    ("taken", "take"),
    ("got", "get"),
    ("gotten", "get"),
    ("saw", "see"),
    ("seen", "see"),
    ("ran", "run"),
    ("ate", "eat"),
    ("eaten", "eat"),
    ("came", "come"),
    ("gave", "give"),
    ("given", "give"),
    ("knew", "know"),
    ("known", "know"),
    ("thought", "think"),
    ("bought", "buy"),
    ("brought", "bring"),
    ("felt", "feel"),
    ("found", "find"),
    ("left", "leave"),
    ("told", "tell"),
    ("said", "say"),
    ("wrote", "write"),
    ("written", "write"),
    ("drove", "drive"),
    ("driven", "drive"),
    ("sat", "sit"),
    ("slept", "sleep"),
    ("taught", "teach"),
    ("caught", "catch"),
    ("kept", "keep"),
    ("met", "meet"),
    ("paid", "pay"),
    ("spent", "spend"),
    ("stood", "stand"),
    ("swam", "swim"),
    ("won", "win"),
    ("began", "begin"),
    ("begun", "begin"),
    ("flew", "fly"),
    ("grew", "grow"),
    ("heard", "hear"),
    ("held", "hold"),
    ("lost", "lose"),
    ("sang", "sing"),
    ("sung", "sing"),
    ("spoke", "speak"),
    ("spoken", "speak"),
    ("understood", "understand"),
    ("opened", "open"),
    ("opening", "open"),
    ("added", "add"),
    ("adding", "add"),
    ("agreed", "agree"),
    ("seeing", "see"),
    ("fleeing", "flee"),
];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn is_consonant(c: u8) -> bool {
    c.is_ascii_lowercase() && !is_vowel(c)
}

/// Restores a stem that lost its trailing letters to `-ing` or `-ed`.
fn restore_stem(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2 && b[n - 1] == b[n - 2] && is_consonant(b[n - 1]) && !matches!(b[n - 1], b'l' | b's' | b'z' | b'f') {
        return stem[..n - 1].to_string();
    }
    // Short consonant-vowel-consonant stems lost a silent e: mak -> make.
    let cvc = (2..=4).contains(&n)
        && is_consonant(b[n - 1])
        && !matches!(b[n - 1], b'w' | b'x' | b'y')
        && is_vowel(b[n - 2])
        && (n == 2 || is_consonant(b[n - 3]));
    if cvc {
        return format!("{stem}e");
    }
    stem.to_string()
}

fn strip_s(word: &str) -> String {
    if let Some(stem) = word.strip_suffix("ies") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    for suf in ["sses", "shes", "ches", "xes", "zes"] {
        if word.ends_with(suf) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is")
    {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Lemma of a verb given its Penn tag.
pub fn lemmatize_verb(word: &str, tag: &str) -> String {
    let w = word.to_lowercase();
    if let Some((_, lemma)) = VERB_EXCEPTIONS.iter().find(|(form, _)| *form == w) {
        return lemma.to_string();
    }
    match tag {
        "VBZ" => strip_s(&w),
        "VBG" => match w.strip_suffix("ing") {
            Some(stem) if stem.len() >= 2 => restore_stem(stem),
            _ => w,
        },
        "VBD" | "VBN" => {
            if let Some(stem) = w.strip_suffix("ied") {
                if stem.len() >= 2 {
                    return format!("{stem}y");
                }
            }
            match w.strip_suffix("ed") {
                Some(stem) if stem.len() >= 2 => restore_stem(stem),
                _ => w,
            }
        }
        _ => w,
    }
}

pub fn singular(noun: &str) -> String {
    strip_s(noun)
}

pub fn plural(noun: &str) -> String {
    let b = noun.as_bytes();
    if noun.ends_with('y') && b.len() >= 2 && is_consonant(b[b.len() - 2]) {
        return format!("{}ies", &noun[..noun.len() - 1]);
    }
    if ["s", "x", "z", "ch", "sh"].iter().any(|s| noun.ends_with(s)) {
        return format!("{noun}es");
    }
    format!("{noun}s")
}

/// True for forms of be, have and do.
pub fn is_auxiliary(lemma: &str) -> bool {
    matches!(lemma, "be" | "have" | "do")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verbs() {
        let cases = [
            ("watching", "VBG", "watch"),
            ("running", "VBG", "run"),
            ("making", "VBG", "make"),
            ("writing", "VBG", "write"),
            ("eating", "VBG", "eat"),
            ("falling", "VBG", "fall"),
            ("trained", "VBD", "train"),
            ("baked", "VBN", "bake"),
            ("stopped", "VBD", "stop"),
            ("tried", "VBD", "try"),
            ("used", "VBD", "use"),
            ("visited", "VBD", "visit"),
            ("barks", "VBZ", "bark"),
            ("watches", "VBZ", "watch"),
            ("tries", "VBZ", "try"),
            ("is", "VBZ", "be"),
            ("went", "VBD", "go"),
            ("run", "VBP", "run"),
            ("need", "VBP", "need"),
        ];
        for (w, t, want) in cases {
            assert_eq!(lemmatize_verb(w, t), want, "{w}/{t}");
        }
    }

    #[test]
    fn nouns() {
        assert_eq!(singular("stars"), "star");
        assert_eq!(singular("berries"), "berry");
        assert_eq!(singular("glass"), "glass");
        assert_eq!(singular("boxes"), "box");
        assert_eq!(plural("star"), "stars");
        assert_eq!(plural("berry"), "berries");
        assert_eq!(plural("box"), "boxes");
        assert_eq!(plural("day"), "days");
    }
}
