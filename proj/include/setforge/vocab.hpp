#pragma once

#include <string>
#include <vector>

#include "setforge/common.hpp"
#include "setforge/expr.hpp"
#include "setforge/symbols.hpp"

namespace setforge {

/// Model vocabulary: PAD, BOS and EOS followed by the 20 dictionary symbols.
/// Ids are fixed at compile time and recorded in every checkpoint.
struct Vocabulary {
    static constexpr int pad_id = 0;
    static constexpr int bos_id = 1;
    static constexpr int eos_id = 2;
    static constexpr int first_symbol = 3;
    static constexpr int size = first_symbol + static_cast<int>(dictionary_size);

    static constexpr int from_symbol(SymbolId s) { return first_symbol + static_cast<int>(s); }

    static constexpr bool is_symbol(int vid) { return vid >= first_symbol && vid < size; }

    static constexpr SymbolId to_symbol(int vid) {
        return static_cast<SymbolId>(vid - first_symbol);
    }

    static std::string token_name(int vid) {
        switch (vid) {
            case pad_id: return "<pad>";
            case bos_id: return "<bos>";
            case eos_id: return "<eos>";
            default: return std::string(symbol_name(to_symbol(vid)));
        }
    }

    static std::vector<std::string> all_names() {
        std::vector<std::string> names;
        names.reserve(size);
        for (int vid = 0; vid < size; ++vid) {
            names.push_back(token_name(vid));
        }
        return names;
    }
};

/// Teacher-forcing views of a target sequence, both padded to seq_len:
/// input = BOS tokens..., labels = tokens... EOS.
struct EncodedTarget {
    std::vector<int> input;
    std::vector<int> labels;
};

inline EncodedTarget encode_target(const TokenSeq& tokens, int seq_len) {
    const int n = static_cast<int>(tokens.size());
    if (n + 1 > seq_len) {
        throw LengthExceeded("target sequence longer than decoder window");
    }
    EncodedTarget out;
    out.input.assign(static_cast<std::size_t>(seq_len), Vocabulary::pad_id);
    out.labels.assign(static_cast<std::size_t>(seq_len), Vocabulary::pad_id);
    out.input[0] = Vocabulary::bos_id;
    for (int i = 0; i < n; ++i) {
        out.input[static_cast<std::size_t>(i + 1)] = Vocabulary::from_symbol(tokens[i]);
        out.labels[static_cast<std::size_t>(i)] = Vocabulary::from_symbol(tokens[i]);
    }
    out.labels[static_cast<std::size_t>(n)] = Vocabulary::eos_id;
    return out;
}

}  // namespace setforge
