#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mole {

/// Byte-level vocabulary: raw bytes 0..255 plus four specials. No trained
/// tokenizer, so encode/decode is total and exactly invertible.
namespace tok {

inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kPad = 258;
inline constexpr int kSep = 259;
inline constexpr int kVocabSize = 260;

/// UTF-8 text to byte token ids (no specials added).
std::vector<int> tokenize(std::string_view text);

/// Byte tokens back to text. Special tokens are dropped; ids >= kVocabSize
/// raise std::out_of_range.
std::string detokenize(const std::vector<int>& tokens);

} // namespace tok

} // namespace mole
