#include "mole/tokenizer.hpp"

#include <stdexcept>

namespace mole {
namespace tok {

std::vector<int> tokenize(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(static_cast<int>(c));
    return out;
}

std::string detokenize(const std::vector<int>& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        if (t < 0 || t >= kVocabSize) {
            throw std::out_of_range("detokenize: token id " + std::to_string(t) +
                                    " outside vocab of " + std::to_string(kVocabSize));
        }
        if (t < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
        // specials carry no text
    }
    return out;
}

} // namespace tok
} // namespace mole
