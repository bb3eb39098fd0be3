#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "pfcvr/lexicon.hpp"
#include "pfcvr/matrix.hpp"

namespace pfcvr {

constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kMaskId = 3;
constexpr int kUnkId = 4;
constexpr int kNumSpecialTokens = 5;

inline bool is_special_token(int id) { return id < kNumSpecialTokens; }

struct TokenSeq {
    std::vector<int> ids;  // length max_len: [BOS] words [EOS] [PAD]...
    int eos_pos = 0;
    bool truncated = false;
};

// Whitespace tokenizer over the closed caption vocabulary. Lowercases,
// strips sentence punctuation, maps unknown words to [UNK].
class Tokenizer {
  public:
    Tokenizer() {
        add_word("[PAD]");
        add_word("[BOS]");
        add_word("[EOS]");
        add_word("[MASK]");
        add_word("[UNK]");
        for (const auto& w : kPartNames) add_word(w);
        for (const auto& vals : kPartValues)
            for (const auto& w : vals) add_word(w);
        for (const auto& w : kBodyColors) add_word(w);
        for (const auto& w : kBodyShapes) add_word(w);
        for (const auto& w : kTemplateWords) add_word(w);
    }

    int vocab_size() const { return static_cast<int>(words_.size()); }

    int word_id(const std::string& w) const {
        auto it = index_.find(w);
        return it == index_.end() ? kUnkId : it->second;
    }

    const std::string& word(int id) const {
        check(id >= 0 && id < vocab_size(), "tokenizer: id out of range");
        return words_[id];
    }

    static std::vector<std::string> split_words(const std::string& text) {
        std::vector<std::string> out;
        std::string cur;
        for (char raw : text) {
            unsigned char c = static_cast<unsigned char>(raw);
            if (std::isspace(c)) {
                if (!cur.empty()) out.push_back(cur), cur.clear();
                continue;
            }
            if (c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':') continue;
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    }

    TokenSeq encode(const std::string& text, int max_len) const {
        check(max_len >= 2, "tokenizer: max_len must fit [BOS] and [EOS]");
        auto words = split_words(text);
        TokenSeq seq;
        seq.ids.assign(static_cast<size_t>(max_len), kPadId);
        seq.ids[0] = kBosId;
        int limit = max_len - 2;
        int n = static_cast<int>(words.size());
        seq.truncated = n > limit;
        int kept = std::min(n, limit);
        for (int i = 0; i < kept; ++i) seq.ids[static_cast<size_t>(i + 1)] = word_id(words[static_cast<size_t>(i)]);
        seq.eos_pos = kept + 1;
        seq.ids[static_cast<size_t>(seq.eos_pos)] = kEosId;
        return seq;
    }

    std::string decode(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids) {
            if (id == kPadId || id == kBosId || id == kEosId) continue;
            if (!out.empty()) out.push_back(' ');
            out += word(id);
        }
        return out;
    }

    // Positions eligible for masking: real words only, never specials.
    static std::vector<int> maskable_positions(const TokenSeq& seq) {
        std::vector<int> out;
        for (int p = 0; p < static_cast<int>(seq.ids.size()); ++p)
            if (!is_special_token(seq.ids[static_cast<size_t>(p)])) out.push_back(p);
        return out;
    }

  private:
    void add_word(const std::string& w) {
        if (index_.count(w)) return;
        index_[w] = static_cast<int>(words_.size());
        words_.push_back(w);
    }

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace pfcvr
