/// Sliding character window used by [`split_into_chunks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkWindow {
    pub window: usize,
    pub overlap: usize,
}

impl Default for ChunkWindow {
    fn default() -> Self {
        Self {
            window: 1200,
            overlap: 200,
        }
    }
}

/// Split full text into overlapping passages for the chunk tier.
///
/// Windows are measured in characters. A window that does not reach the end
/// of the text is cut after the last sentence terminator in its second half
/// when one exists. Consecutive windows share `overlap` characters.
pub fn split_into_chunks(text: &str, cfg: ChunkWindow) -> Vec<String> {
    assert!(cfg.window > 0 && cfg.overlap < cfg.window, "overlap must be smaller than window");
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let hard_end = (start + cfg.window).min(chars.len());
        let end = if hard_end == chars.len() {
            hard_end
        } else {
            sentence_cut(&chars, start + cfg.window / 2, hard_end).unwrap_or(hard_end)
        };
        let piece: String = chars[start..end].iter().collect();
        let piece = piece.trim();
        if !piece.is_empty() {
            out.push(piece.to_string());
        }
        if end == chars.len() {
            break;
        }
        start = end.saturating_sub(cfg.overlap).max(start + 1);
    }
    out
}

/// Position just after the last sentence terminator in `[from, to)`.
fn sentence_cut(chars: &[char], from: usize, to: usize) -> Option<usize> {
    (from..to).rev().find_map(|i| {
        let terminal = matches!(chars[i], '.' | '!' | '?' | '\n');
        let followed_by_space = chars.get(i + 1).is_none_or(|c| c.is_whitespace());
        (terminal && followed_by_space).then_some(i + 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_text_is_one_chunk() {
        assert_eq!(split_into_chunks("  Short text. ", ChunkWindow::default()), vec!["Short text."]);
        assert!(split_into_chunks("", ChunkWindow::default()).is_empty());
    }

    #[test]
    fn windows_overlap_and_cover() {
        let sentence = "This sentence has exactly forty chars.. ";
        let text = sentence.repeat(100);
        let chunks = split_into_chunks(&text, ChunkWindow::default());
        assert!(chunks.len() > 3);
        for c in &chunks {
            assert!(c.chars().count() <= 1200);
        }
        // every interior cut lands on a sentence boundary
        for c in &chunks[..chunks.len() - 1] {
            assert!(c.ends_with('.'), "{c:?}");
        }
        assert!(text.trim_end().ends_with(chunks.last().unwrap().as_str()));
    }

    #[test]
    fn falls_back_to_hard_cut() {
        let text = "x".repeat(3000);
        let chunks = split_into_chunks(&text, ChunkWindow::default());
        assert_eq!(chunks[0].len(), 1200);
        assert_eq!(chunks[1].len(), 1200);
        // 0..1200, 1000..2200, 2000..3000
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks[2].len(), 1000);
    }
}
