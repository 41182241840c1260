#include "evocollapse/model.hpp"

#include <algorithm>

namespace evocollapse {

TokenSequence tokenize_bytes(std::string_view text, std::size_t max_len) {
    if (max_len < 1) fail(ErrorClass::InvalidArgument, "tokenize_bytes: max_len must be >= 1");
    const std::size_t n = std::min(text.size(), max_len);
    TokenSequence seq;
    seq.tokens.reserve(n);
    for (std::size_t i = 0; i < n; ++i) seq.tokens.push_back(static_cast<unsigned char>(text[i]));
    return seq;
}

}  // namespace evocollapse
